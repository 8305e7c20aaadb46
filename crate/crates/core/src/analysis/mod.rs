//! Stability diagnostics, Lyapunov drift, capacity region and throughput search.

pub mod lp;
pub mod lyapunov;
pub mod region;
pub mod stability;
pub mod sweep;

pub use lyapunov::{drift_estimate, lyapunov, Binning, DriftAccumulator, DriftBin, LyapunovSeries};
pub use region::{
    capacity_feasible, capacity_feasible_routed, junction_rate_hull, max_throughput_multiplier,
    max_throughput_multiplier_routed, RegionCertificate, RegionError, StateDistribution, ThroughputBound,
};
pub use stability::{stability_statistic, StabilityAccumulator, StabilityReport};
pub use sweep::{empirical_multiplier, passes, Criterion, MultiplierEstimate, RandomizedController, SearchRange};
