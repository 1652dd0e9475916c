use serde::{Deserialize, Serialize};

/// Timings of one parallel loop execution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub wall_s: f64,
    /// Seconds each worker spent inside the kernel.
    pub busy_s: Vec<f64>,
    /// Columns executed by each worker.
    pub dispatched: Vec<usize>,
    /// Total seconds all workers spent on data-environment copies.
    pub copy_s: f64,
}

impl RunMetrics {
    pub fn mean_busy(&self) -> f64 {
        if self.busy_s.is_empty() {
            return 0.0;
        }
        self.busy_s.iter().sum::<f64>() / self.busy_s.len() as f64
    }

    pub fn max_busy(&self) -> f64 {
        self.busy_s.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_dispatched(&self) -> usize {
        self.dispatched.iter().sum()
    }

    pub fn overhead_pct(&self) -> f64 {
        overhead_pct(self.wall_s, self.mean_busy())
    }

    pub fn imbalance_ratio(&self) -> f64 {
        imbalance_ratio(&self.busy_s)
    }
}

/// Share of the loop runtime not spent in useful per-thread work:
/// `100 (wall - mean busy) / wall`.
pub fn overhead_pct(wall_s: f64, mean_busy_s: f64) -> f64 {
    if wall_s <= 0.0 {
        return 0.0;
    }
    100.0 * (wall_s - mean_busy_s) / wall_s
}

/// `max(busy) / mean(busy)`; 1 when nothing ran.
pub fn imbalance_ratio(busy_s: &[f64]) -> f64 {
    if busy_s.is_empty() {
        return 1.0;
    }
    let mean = busy_s.iter().sum::<f64>() / busy_s.len() as f64;
    if mean <= 0.0 {
        return 1.0;
    }
    busy_s.iter().copied().fold(0.0, f64::max) / mean
}

/// Summary statistics over repeated timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Coefficient of variation (stddev / mean), 0 for a single sample.
    pub cov: f64,
}

impl Timing {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self {
                samples,
                mean: 0.0,
                median: 0.0,
                min: 0.0,
                max: 0.0,
                cov: 0.0,
            };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let cov = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Self {
            mean,
            median,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            cov,
            samples,
        }
    }
}
