//! Quadratic Lyapunov function and its empirical conditional drift.

use serde::Serialize;

use crate::sim::Trace;

/// `Σ_a Q_a²`.
pub fn lyapunov(queues: &[f64]) -> f64 {
    queues.iter().map(|q| q * q).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Bins of equal sample count.
    Quantile,
    /// Bins of equal width over the observed total-queue range.
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean total queue of the samples in the bin.
    pub mean_total: f64,
    /// Mean of `L(t+1) - L(t)`.
    pub mean_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSeries {
    /// `L(Q(τ))` for `τ = 0..=T`.
    pub values: Vec<f64>,
    pub bins: Vec<DriftBin>,
    /// Least-squares fit `drift ≈ b - epsilon · ΣQ`.
    pub b: f64,
    pub epsilon: f64,
    /// `b / epsilon` when `epsilon > 0`.
    pub knee: Option<f64>,
}

impl LyapunovSeries {
    /// Bins lying entirely above the knee.
    pub fn bins_above_knee(&self) -> impl Iterator<Item = &DriftBin> {
        let knee = self.knee.unwrap_or(f64::INFINITY);
        self.bins.iter().filter(move |b| b.lo > knee)
    }
}

/// Collects `(ΣQ(t), L(t+1) - L(t))` pairs while a run streams past.
#[derive(Debug, Clone, Default)]
pub struct DriftAccumulator {
    values: Vec<f64>,
    totals: Vec<f64>,
}

impl DriftAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed `Q(0), Q(1), ...` in order.
    pub fn observe(&mut self, queues: &[f64]) {
        self.values.push(lyapunov(queues));
        self.totals.push(queues.iter().sum());
    }

    pub fn finish(&self, bins: usize, binning: Binning) -> LyapunovSeries {
        let n = self.values.len().saturating_sub(1);
        let mut samples: Vec<(f64, f64)> = (0..n)
            .map(|t| (self.totals[t], self.values[t + 1] - self.values[t]))
            .collect();

        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Ordinary least squares of drift on total queue.
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &samples {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let k = samples.len() as f64;
        let denom = k * sxx - sx * sx;
        let (b, epsilon) = if samples.len() >= 2 && denom > 0.0 {
            let slope = (k * sxy - sx * sy) / denom;
            ((sy - slope * sx) / k, -slope)
        } else {
            (if k > 0.0 { sy / k } else { 0.0 }, 0.0)
        };
        let knee = (epsilon > 0.0).then(|| b / epsilon);

        let bins = if samples.is_empty() || bins == 0 {
            Vec::new()
        } else {
            let groups: Vec<&[(f64, f64)]> = match binning {
                Binning::Quantile => {
                    let mut out = Vec::new();
                    for i in 0..bins {
                        let a = i * samples.len() / bins;
                        let z = (i + 1) * samples.len() / bins;
                        if z > a {
                            out.push(&samples[a..z]);
                        }
                    }
                    out
                }
                Binning::EqualWidth => {
                    let lo = samples[0].0;
                    let hi = samples[samples.len() - 1].0;
                    let width = (hi - lo) / bins as f64;
                    let mut out = Vec::new();
                    let mut start = 0;
                    for i in 0..bins {
                        let edge = if i + 1 == bins { f64::INFINITY } else { lo + width * (i + 1) as f64 };
                        let end = start + samples[start..].partition_point(|s| s.0 < edge);
                        if end > start {
                            out.push(&samples[start..end]);
                        }
                        start = end;
                    }
                    out
                }
            };
            groups
                .into_iter()
                .map(|g| DriftBin {
                    lo: g[0].0,
                    hi: g[g.len() - 1].0,
                    count: g.len(),
                    mean_total: g.iter().map(|s| s.0).sum::<f64>() / g.len() as f64,
                    mean_drift: g.iter().map(|s| s.1).sum::<f64>() / g.len() as f64,
                })
                .collect()
        };
        LyapunovSeries {
            values: self.values.clone(),
            bins,
            b,
            epsilon,
            knee,
        }
    }
}

/// Binned conditional drift of `L` along a trace.
pub fn drift_estimate(trace: &Trace, bins: usize, binning: Binning) -> LyapunovSeries {
    let mut acc = DriftAccumulator::new();
    for tau in 0..=trace.len() {
        acc.observe(trace.queues_at(tau));
    }
    acc.finish(bins, binning)
}
