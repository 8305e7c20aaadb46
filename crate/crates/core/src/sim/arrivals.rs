//! Exogenous arrival processes. Every process is bounded and its samples are
//! a pure function of `(seed, stream, t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::slot_rng;
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// First slot of the segment, relative to the period start.
    pub start: u64,
    /// Mean vehicles per slot.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalKind {
    /// Exactly `rate` vehicles every slot.
    Constant { rate: f64 },
    /// `k * unit` vehicles with probability `pmf[k]`.
    IidBounded {
        pmf: Vec<f64>,
        #[serde(default = "one")]
        unit: f64,
    },
    /// Piecewise-constant mean rate, repeated every `period` slots, times iid
    /// noise uniform on `{0, 1/n, ..., 2}` (mean 1). No noise when `n = 0`.
    TimeProfile {
        period: u64,
        segments: Vec<Segment>,
        #[serde(default)]
        noise_levels: u32,
    },
    /// Accepted by the parser only so it can be rejected with a clear message.
    Poisson { rate: f64 },
}

fn one() -> f64 {
    1.0
}

impl ArrivalKind {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            ArrivalKind::Constant { rate } => {
                if !finite_nonneg(*rate) {
                    return Err(ConfigError::invalid(format!("constant arrival rate {rate} must be >= 0")));
                }
            }
            ArrivalKind::IidBounded { pmf, unit } => {
                if pmf.is_empty() || pmf.iter().any(|p| !finite_nonneg(*p)) {
                    return Err(ConfigError::invalid("arrival pmf must be nonempty and nonnegative"));
                }
                let s: f64 = pmf.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(ConfigError::invalid(format!("arrival pmf sums to {s}, not 1")));
                }
                if !finite_nonneg(*unit) {
                    return Err(ConfigError::invalid("arrival unit must be >= 0"));
                }
            }
            ArrivalKind::TimeProfile { period, segments, .. } => {
                if *period == 0 {
                    return Err(ConfigError::invalid("time profile period must be >= 1"));
                }
                if segments.first().map(|s| s.start) != Some(0) {
                    return Err(ConfigError::invalid("time profile must start with a segment at slot 0"));
                }
                for w in segments.windows(2) {
                    if w[1].start <= w[0].start {
                        return Err(ConfigError::invalid("time profile segments must have increasing starts"));
                    }
                }
                if segments.iter().any(|s| s.start >= *period || !finite_nonneg(s.rate)) {
                    return Err(ConfigError::invalid(
                        "time profile segments must start inside the period with rate >= 0",
                    ));
                }
            }
            ArrivalKind::Poisson { .. } => {
                return Err(ConfigError::invalid(
                    "unbounded arrival distribution 'poisson' rejected: arrivals need a finite bound",
                ));
            }
        }
        Ok(())
    }

    /// Long-run mean vehicles per slot.
    pub fn mean_rate(&self) -> f64 {
        match self {
            ArrivalKind::Constant { rate } | ArrivalKind::Poisson { rate } => *rate,
            ArrivalKind::IidBounded { pmf, unit } => {
                pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() * unit
            }
            ArrivalKind::TimeProfile { period, segments, .. } => {
                let mut total = 0.0;
                for (i, s) in segments.iter().enumerate() {
                    let end = segments.get(i + 1).map_or(*period, |n| n.start);
                    total += s.rate * (end - s.start) as f64;
                }
                total / *period as f64
            }
        }
    }

    /// Largest possible single-slot sample.
    pub fn bound(&self) -> f64 {
        match self {
            ArrivalKind::Constant { rate } => *rate,
            ArrivalKind::IidBounded { pmf, unit } => {
                pmf.iter().rposition(|p| *p > 0.0).unwrap_or(0) as f64 * unit
            }
            ArrivalKind::TimeProfile {
                segments,
                noise_levels,
                ..
            } => {
                let peak = segments.iter().map(|s| s.rate).fold(0.0, f64::max);
                if *noise_levels == 0 {
                    peak
                } else {
                    2.0 * peak
                }
            }
            ArrivalKind::Poisson { .. } => f64::INFINITY,
        }
    }

    fn segment_rate(segments: &[Segment], period: u64, t: u64) -> f64 {
        let phase = t % period;
        let i = segments.partition_point(|s| s.start <= phase);
        segments[i.saturating_sub(1)].rate
    }

    fn sample_with<R: Rng>(&self, rng: &mut R, t: u64) -> f64 {
        match self {
            ArrivalKind::Constant { rate } => *rate,
            ArrivalKind::IidBounded { pmf, unit } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = pmf.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                for (k, p) in pmf.iter().enumerate().take(last) {
                    acc += p;
                    if u < acc {
                        return k as f64 * unit;
                    }
                }
                last as f64 * unit
            }
            ArrivalKind::TimeProfile {
                period,
                segments,
                noise_levels,
            } => {
                let rate = Self::segment_rate(segments, *period, t);
                if *noise_levels == 0 {
                    return rate;
                }
                let n = *noise_levels;
                let level = rng.random_range(0..=2 * n);
                rate * level as f64 / n as f64
            }
            ArrivalKind::Poisson { .. } => unreachable!("rejected at validation"),
        }
    }
}

/// An arrival process attached to one entry link.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    pub kind: ArrivalKind,
    /// Multiplies every sample (load scaling for sweeps).
    pub scale: f64,
    /// RNG stream id, distinct per process.
    pub stream: u64,
}

impl ArrivalProcess {
    pub fn new(kind: ArrivalKind, stream: u64) -> Result<Self, ConfigError> {
        kind.validate()?;
        Ok(ArrivalProcess {
            kind,
            scale: 1.0,
            stream,
        })
    }

    pub fn mean_rate(&self) -> f64 {
        self.kind.mean_rate() * self.scale
    }

    pub fn bound(&self) -> f64 {
        self.kind.bound() * self.scale
    }
}

/// Vehicles arriving in slot `t`; deterministic given `(seed, stream, t)`.
pub fn sample_arrivals(proc: &ArrivalProcess, seed: u64, t: u64) -> f64 {
    let mut rng = slot_rng(seed, proc.stream, t);
    proc.kind.sample_with(&mut rng, t) * proc.scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proc(kind: ArrivalKind) -> ArrivalProcess {
        ArrivalProcess::new(kind, 3).unwrap()
    }

    #[test]
    fn constant_is_constant() {
        let p = proc(ArrivalKind::Constant { rate: 2.0 });
        assert!((0..100).all(|t| sample_arrivals(&p, 9, t) == 2.0));
    }

    #[test]
    fn point_mass_at_zero() {
        let p = proc(ArrivalKind::IidBounded { pmf: vec![1.0], unit: 1.0 });
        assert!((0..100).all(|t| sample_arrivals(&p, 9, t) == 0.0));
    }

    #[test]
    fn uniform_mean_converges() {
        let p = proc(ArrivalKind::IidBounded {
            pmf: vec![0.2; 5],
            unit: 1.0,
        });
        let n = 100_000;
        let mean = (0..n).map(|t| sample_arrivals(&p, 42, t)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
        assert!((0..n).all(|t| (0.0..=4.0).contains(&sample_arrivals(&p, 42, t))));
    }

    #[test]
    fn deterministic_per_slot() {
        let p = proc(ArrivalKind::IidBounded {
            pmf: vec![0.5, 0.25, 0.25],
            unit: 1.5,
        });
        let a: Vec<f64> = (0..50).map(|t| sample_arrivals(&p, 7, t)).collect();
        let b: Vec<f64> = (0..50).rev().map(|t| sample_arrivals(&p, 7, t)).collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn profile_mean_and_bound() {
        let kind = ArrivalKind::TimeProfile {
            period: 100,
            segments: vec![Segment { start: 0, rate: 1.0 }, Segment { start: 50, rate: 3.0 }],
            noise_levels: 2,
        };
        assert_eq!(kind.mean_rate(), 2.0);
        assert_eq!(kind.bound(), 6.0);
        let p = proc(kind);
        let n = 200_000;
        let mean = (0..n).map(|t| sample_arrivals(&p, 1, t)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.03, "mean {mean}");
        assert!((0..1000).all(|t| sample_arrivals(&p, 1, t) <= 6.0));
    }

    #[test]
    fn rejects_unbounded_and_bad_pmf() {
        assert!(ArrivalKind::Poisson { rate: 1.0 }.validate().is_err());
        assert!(ArrivalKind::IidBounded { pmf: vec![0.5, 0.6], unit: 1.0 }.validate().is_err());
        assert!(ArrivalKind::Constant { rate: -1.0 }.validate().is_err());
        let bad = ArrivalKind::TimeProfile {
            period: 10,
            segments: vec![Segment { start: 1, rate: 1.0 }],
            noise_levels: 0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scale_multiplies() {
        let mut p = proc(ArrivalKind::IidBounded { pmf: vec![0.5, 0.5], unit: 1.0 });
        let base: Vec<f64> = (0..20).map(|t| sample_arrivals(&p, 5, t)).collect();
        p.scale = 1.3;
        let scaled: Vec<f64> = (0..20).map(|t| sample_arrivals(&p, 5, t)).collect();
        for (b, s) in base.iter().zip(&scaled) {
            assert_eq!(b * 1.3, *s);
        }
    }
}
