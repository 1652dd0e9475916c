//! Column-loop executor with OpenMP-style scheduling strategies and a
//! data-environment (private copy) policy, plus a discrete-event model of
//! the same strategies.

mod metrics;
mod pool;
mod sim;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::physics::KernelError;

pub use metrics::{imbalance_ratio, overhead_pct, RunMetrics, Timing};
pub use pool::{run_columns, run_parallel};
pub use sim::{
    column_cost_s, modeled_copy_s, simulate_makespan, simulate_run, simulate_schedule, SimCosts,
    SimOutcome, MEMCPY_BYTES_PER_SECOND, SIM_UNITS_PER_SECOND,
};
pub use sweep::{chunk_size_sweep, SweepPoint};

pub const DEFAULT_WORKSPACE_BYTES: usize = 16 << 20;
/// Bytes copied per worker under [`DataEnvMode::CopyScalarsOnly`]: four
/// `f64` scalars.
pub const SCALAR_COPY_BYTES: usize = 4 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Contiguous blocks, thread `t` owning `[t n / P, (t + 1) n / P)`.
    StaticBlock,
    /// Blocks of `omp_chunk_size` dealt round-robin.
    StaticCyclic,
    /// Idle workers grab the next `omp_chunk_size` columns from a shared
    /// cursor.
    #[default]
    Dynamic,
    /// One queued task object per column.
    TaskPerColumn,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::StaticBlock,
        Strategy::StaticCyclic,
        Strategy::Dynamic,
        Strategy::TaskPerColumn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::StaticBlock => "static-block",
            Strategy::StaticCyclic => "static-cyclic",
            Strategy::Dynamic => "dynamic",
            Strategy::TaskPerColumn => "task-per-column",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, Strategy::StaticBlock | Strategy::StaticCyclic)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" | "static-block" => Ok(Strategy::StaticBlock),
            "static-cyclic" => Ok(Strategy::StaticCyclic),
            "dynamic" => Ok(Strategy::Dynamic),
            "task" | "task-per-column" => Ok(Strategy::TaskPerColumn),
            _ => Err(format!("unknown strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataEnvMode {
    /// Every worker receives a private copy of the whole workspace.
    CopyAll,
    /// Only a handful of scalars are copied per worker.
    CopyScalarsOnly,
    /// Nothing is copied; workers write to disjoint slices of shared output.
    #[default]
    SharedArrays,
}

impl DataEnvMode {
    pub const ALL: [DataEnvMode; 3] = [
        DataEnvMode::CopyAll,
        DataEnvMode::CopyScalarsOnly,
        DataEnvMode::SharedArrays,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataEnvMode::CopyAll => "copy-all",
            DataEnvMode::CopyScalarsOnly => "copy-scalars-only",
            DataEnvMode::SharedArrays => "shared-arrays",
        }
    }
}

impl fmt::Display for DataEnvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataEnvMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataEnvMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown data environment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataEnvPolicy {
    pub mode: DataEnvMode,
    pub workspace_bytes: usize,
}

impl Default for DataEnvPolicy {
    fn default() -> Self {
        Self {
            mode: DataEnvMode::SharedArrays,
            workspace_bytes: DEFAULT_WORKSPACE_BYTES,
        }
    }
}

impl DataEnvPolicy {
    pub fn new(mode: DataEnvMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Bytes each worker copies on entry.
    pub fn bytes_per_worker(&self) -> usize {
        match self.mode {
            DataEnvMode::CopyAll => self.workspace_bytes,
            DataEnvMode::CopyScalarsOnly => SCALAR_COPY_BYTES,
            DataEnvMode::SharedArrays => 0,
        }
    }
}

/// How measured timings are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    /// Real threads, monotonic-clock timings.
    #[default]
    Measured,
    /// Deterministic cost accounting from kernel work units.
    Simulated,
}

impl FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "measured" => Ok(ExecMode::Measured),
            "simulated" => Ok(ExecMode::Simulated),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::Measured => "measured",
            ExecMode::Simulated => "simulated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub strategy: Strategy,
    /// Columns handed out per dispatch (dynamic and static-cyclic).
    pub omp_chunk_size: usize,
    pub n_threads: usize,
    pub data_env: DataEnvPolicy,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::Dynamic,
            omp_chunk_size: 1,
            n_threads: 1,
            data_env: DataEnvPolicy::default(),
        }
    }
}

impl ScheduleSpec {
    pub fn new(strategy: Strategy, omp_chunk_size: usize, n_threads: usize) -> Self {
        Self {
            strategy,
            omp_chunk_size,
            n_threads,
            data_env: DataEnvPolicy::default(),
        }
    }

    pub fn dynamic(omp_chunk_size: usize, n_threads: usize) -> Self {
        Self::new(Strategy::Dynamic, omp_chunk_size, n_threads)
    }

    pub fn static_block(n_threads: usize) -> Self {
        Self::new(Strategy::StaticBlock, 1, n_threads)
    }

    pub fn with_data_env(mut self, data_env: DataEnvPolicy) -> Self {
        self.data_env = data_env;
        self
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.omp_chunk_size == 0 {
            return Err(ScheduleError::InvalidSpec("omp_chunk_size must be >= 1".into()));
        }
        if self.n_threads == 0 {
            return Err(ScheduleError::InvalidSpec("n_threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Dispatch blocks `(thread, start, end)` of a static strategy, in the
    /// order each thread executes them. `None` for non-static strategies.
    pub fn static_blocks(&self, n_columns: usize) -> Option<Vec<(usize, usize, usize)>> {
        let p = self.n_threads.max(1);
        match self.strategy {
            Strategy::StaticBlock => Some(
                (0..p)
                    .map(|t| (t, t * n_columns / p, (t + 1) * n_columns / p))
                    .filter(|(_, s, e)| e > s)
                    .collect(),
            ),
            Strategy::StaticCyclic => {
                let c = self.omp_chunk_size.max(1);
                Some(
                    (0..n_columns.div_ceil(c))
                        .map(|b| (b % p, b * c, ((b + 1) * c).min(n_columns)))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Column-to-thread map of a static strategy.
    pub fn static_assignment(&self, n_columns: usize) -> Option<Vec<usize>> {
        let blocks = self.static_blocks(n_columns)?;
        let mut map = vec![0; n_columns];
        for (t, s, e) in blocks {
            map[s..e].iter_mut().for_each(|m| *m = t);
        }
        Some(map)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    InvalidSpec(String),
    #[error("run aborted: {0}")]
    Kernel(#[from] KernelError),
    #[error("run aborted: worker panicked on column {col_id}: {message}")]
    WorkerPanic { col_id: usize, message: String },
    #[error("negative cost {value} for column {index}")]
    NegativeCost { index: usize, value: f64 },
}

impl ScheduleError {
    /// Column the run failed on, if the failure is column-specific.
    pub fn col_id(&self) -> Option<usize> {
        match self {
            ScheduleError::Kernel(e) => Some(e.col_id),
            ScheduleError::WorkerPanic { col_id, .. } => Some(*col_id),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_block_uses_floor_partition() {
        let spec = ScheduleSpec::static_block(2);
        assert_eq!(spec.static_assignment(5).unwrap(), vec![0, 0, 1, 1, 1]);
        let spec = ScheduleSpec::static_block(4);
        assert_eq!(spec.static_assignment(3).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn static_cyclic_deals_blocks() {
        let spec = ScheduleSpec::new(Strategy::StaticCyclic, 2, 3);
        assert_eq!(
            spec.static_assignment(9).unwrap(),
            vec![0, 0, 1, 1, 2, 2, 0, 0, 1]
        );
        assert!(ScheduleSpec::dynamic(1, 2).static_assignment(4).is_none());
    }

    #[test]
    fn validation() {
        assert!(ScheduleSpec::dynamic(0, 1).validate().is_err());
        assert!(ScheduleSpec::dynamic(1, 0).validate().is_err());
        assert!(ScheduleSpec::dynamic(3, 2).validate().is_ok());
    }

    #[test]
    fn parse_names() {
        assert_eq!("static".parse::<Strategy>().unwrap(), Strategy::StaticBlock);
        assert_eq!("task".parse::<Strategy>().unwrap(), Strategy::TaskPerColumn);
        assert!("guided".parse::<Strategy>().is_err());
        assert_eq!(
            "copy-scalars-only".parse::<DataEnvMode>().unwrap(),
            DataEnvMode::CopyScalarsOnly
        );
        assert!(DataEnvPolicy::new(DataEnvMode::CopyScalarsOnly).bytes_per_worker() <= 64);
    }
}
