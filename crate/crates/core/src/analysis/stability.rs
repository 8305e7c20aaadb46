//! Empirical strong-stability statistic: for each threshold `V`, the fraction
//! of slots `τ < T` in which a queue exceeded `V`.

use serde::Serialize;

use crate::sim::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub thresholds: Vec<f64>,
    /// `[threshold][queue]`.
    pub per_queue: Vec<Vec<f64>>,
    /// Largest per-queue statistic for each threshold.
    pub worst: Vec<f64>,
    pub slots: u64,
    /// Least-squares slope of the total queue over the second half of the slots.
    pub trend_slope: f64,
}

impl StabilityReport {
    /// Worst-case statistic at the threshold closest to `v`.
    pub fn worst_at(&self, v: f64) -> f64 {
        let i = self
            .thresholds
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
            .map(|(i, _)| i)
            .expect("nonempty grid");
        self.worst[i]
    }
}

/// Streaming form of [`stability_statistic`]: feed `Q(0), Q(1), ...` in order.
#[derive(Debug, Clone)]
pub struct StabilityAccumulator {
    thresholds: Vec<f64>,
    counts: Vec<Vec<u64>>,
    slots: u64,
    trend_from: u64,
    // Regression sums over (τ, ΣQ(τ)) for τ >= trend_from.
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
}

impl StabilityAccumulator {
    /// `horizon` is the number of samples that will be fed; the trend uses the
    /// second half of them.
    pub fn new(thresholds: &[f64], n_queues: usize, horizon: u64) -> Self {
        StabilityAccumulator {
            thresholds: thresholds.to_vec(),
            counts: vec![vec![0; n_queues]; thresholds.len()],
            slots: 0,
            trend_from: horizon / 2,
            n: 0.0,
            sx: 0.0,
            sy: 0.0,
            sxx: 0.0,
            sxy: 0.0,
        }
    }

    pub fn observe(&mut self, queues: &[f64]) {
        for (v, counts) in self.thresholds.iter().zip(self.counts.iter_mut()) {
            for (c, &q) in counts.iter_mut().zip(queues) {
                if q > *v {
                    *c += 1;
                }
            }
        }
        if self.slots >= self.trend_from {
            let x = self.slots as f64;
            let y: f64 = queues.iter().sum();
            self.n += 1.0;
            self.sx += x;
            self.sy += y;
            self.sxx += x * x;
            self.sxy += x * y;
        }
        self.slots += 1;
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn finish(&self) -> StabilityReport {
        let t = self.slots.max(1) as f64;
        let per_queue: Vec<Vec<f64>> = self
            .counts
            .iter()
            .map(|c| c.iter().map(|&k| k as f64 / t).collect())
            .collect();
        let worst = per_queue.iter().map(|q| q.iter().copied().fold(0.0, f64::max)).collect();
        let denom = self.n * self.sxx - self.sx * self.sx;
        let trend_slope = if self.n >= 2.0 && denom != 0.0 {
            (self.n * self.sxy - self.sx * self.sy) / denom
        } else {
            0.0
        };
        StabilityReport {
            thresholds: self.thresholds.clone(),
            per_queue,
            worst,
            slots: self.slots,
            trend_slope,
        }
    }
}

/// Statistic over `Q(τ)` for `τ = 0 .. len-1` of the trace.
pub fn stability_statistic(trace: &Trace, thresholds: &[f64]) -> StabilityReport {
    let t = trace.len() as u64;
    let mut acc = StabilityAccumulator::new(thresholds, trace.initial_queues.len(), t);
    for tau in 0..trace.len() {
        acc.observe(trace.queues_at(tau));
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(series: impl Iterator<Item = f64>, grid: &[f64], horizon: u64) -> StabilityReport {
        let mut acc = StabilityAccumulator::new(grid, 1, horizon);
        for q in series {
            acc.observe(&[q]);
        }
        acc.finish()
    }

    #[test]
    fn zero_queue_is_zero() {
        let r = feed(std::iter::repeat(0.0).take(100), &[0.5, 10.0], 100);
        assert_eq!(r.worst, vec![0.0, 0.0]);
        assert_eq!(r.trend_slope, 0.0);
    }

    #[test]
    fn linear_growth_half_above_midpoint() {
        let h = 1000u64;
        let r = feed((0..h).map(|t| t as f64), &[h as f64 / 2.0], h);
        assert!((r.worst[0] - 0.5).abs() < 0.002, "{:?}", r.worst);
        assert!((r.trend_slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_threshold() {
        let grid: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let r = feed((0..500).map(|t| ((t * 37) % 23) as f64), &grid, 500);
        for w in r.worst.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.worst.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
