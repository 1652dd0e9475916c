//! Proportional partitioning of column work between a host pool and an
//! emulated coprocessor pool, with a transfer cost model.

mod engine;
mod pack;

use std::fmt;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::physics::{Chunk, ColumnKernel, ColumnOutput, ColumnState, KernelError};
use crate::scheduler::{column_cost_s, run_columns, ExecMode, ScheduleError, ScheduleSpec, Timing};

pub use engine::{hetero_summary, HeteroMetrics, HeteroSummary, OffloadEngine};
pub use pack::{
    pack, unpack, ArrayData, DType, ManifestEntry, NamedArray, PackError, PackedBuffer, PACK_ALIGN,
};

/// Calibration needs at least this many sample columns.
pub const MIN_CALIBRATION_COLUMNS: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeteroError {
    #[error("invalid pool profile: {0}")]
    InvalidPool(String),
    #[error("invalid transfer model: {0}")]
    InvalidTransfer(String),
    #[error("invalid partition: {0}")]
    InvalidPlan(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error("device payload corrupt: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Host,
    Device,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Host => "host",
            PoolKind::Device => "device",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolProfile {
    pub name: PoolKind,
    pub n_workers: usize,
    /// Per-worker throughput relative to one host worker.
    pub speed_factor: f64,
}

impl PoolProfile {
    pub const DEFAULT_DEVICE_SPEED: f64 = 0.1;

    pub fn host(n_workers: usize) -> Self {
        Self {
            name: PoolKind::Host,
            n_workers,
            speed_factor: 1.0,
        }
    }

    pub fn device(n_workers: usize) -> Self {
        Self {
            name: PoolKind::Device,
            n_workers,
            speed_factor: Self::DEFAULT_DEVICE_SPEED,
        }
    }

    pub fn with_speed(mut self, speed_factor: f64) -> Self {
        self.speed_factor = speed_factor;
        self
    }

    pub fn validate(&self) -> Result<(), HeteroError> {
        if self.n_workers == 0 {
            return Err(HeteroError::InvalidPool(format!("{} pool has no workers", self.name)));
        }
        if !(self.speed_factor > 0.0 && self.speed_factor.is_finite()) {
            return Err(HeteroError::InvalidPool(format!(
                "{} speed factor {} must be positive",
                self.name, self.speed_factor
            )));
        }
        Ok(())
    }

    /// Throughput of the whole pool in host-worker units.
    pub fn aggregate_speed(&self) -> f64 {
        self.n_workers as f64 * self.speed_factor
    }

    /// Simulated seconds for the pool to drain `work_s` of unit-speed work
    /// spread evenly over its workers.
    pub fn drain_time(&self, work_s: f64) -> f64 {
        work_s / self.aggregate_speed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferModel {
    /// Fixed cost of one transfer.
    pub setup_s: f64,
    pub bandwidth_bps: f64,
    /// Per-column scalars stay on the device after the first timestep.
    pub resident_scalars: bool,
    /// Device buffers are allocated once; otherwise every direction pays an
    /// extra setup for allocation.
    pub persistent_buffers: bool,
    /// All arrays of one direction travel as a single packed buffer.
    pub packed: bool,
}

impl Default for TransferModel {
    fn default() -> Self {
        Self {
            setup_s: 7.6e-4,
            bandwidth_bps: 5.0e8,
            resident_scalars: true,
            persistent_buffers: true,
            packed: true,
        }
    }
}

impl TransferModel {
    pub fn free() -> Self {
        Self {
            setup_s: 0.0,
            bandwidth_bps: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HeteroError> {
        if !(self.setup_s >= 0.0 && self.setup_s.is_finite()) {
            return Err(HeteroError::InvalidTransfer(format!(
                "setup_s {} must be finite and >= 0",
                self.setup_s
            )));
        }
        if !(self.bandwidth_bps > 0.0) {
            return Err(HeteroError::InvalidTransfer(format!(
                "bandwidth {} must be > 0",
                self.bandwidth_bps
            )));
        }
        Ok(())
    }

    pub fn transfers_for(&self, n_arrays: usize) -> usize {
        match (n_arrays, self.packed) {
            (0, _) => 0,
            (_, true) => 1,
            (n, false) => n,
        }
    }

    /// Modeled seconds to move `n_arrays` arrays totalling `bytes`.
    pub fn transfer_time(&self, n_arrays: usize, bytes: usize) -> f64 {
        let n = self.transfers_for(n_arrays);
        if n == 0 {
            return 0.0;
        }
        let alloc = if self.persistent_buffers { 0.0 } else { self.setup_s };
        n as f64 * self.setup_s + alloc + bytes as f64 / self.bandwidth_bps
    }

    /// Achieved bytes per second for the given transfer.
    pub fn effective_bandwidth(&self, n_arrays: usize, bytes: usize) -> f64 {
        bytes as f64 / self.transfer_time(n_arrays, bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub f_device: f64,
    pub device_columns: Vec<usize>,
    pub host_columns: Vec<usize>,
}

impl PartitionPlan {
    /// Offloads the last `round(f_device * n)` columns.
    pub fn from_fraction(f_device: f64, n_columns: usize) -> Result<Self, HeteroError> {
        if !(0.0..=1.0).contains(&f_device) {
            return Err(HeteroError::InvalidPlan(format!("f_device {f_device} outside [0, 1]")));
        }
        let n_dev = (f_device * n_columns as f64).round() as usize;
        Ok(Self::from_device_count(n_dev.min(n_columns), n_columns, f_device))
    }

    fn from_device_count(n_dev: usize, n_columns: usize, f_device: f64) -> Self {
        let split = n_columns - n_dev;
        Self {
            f_device,
            host_columns: (0..split).collect(),
            device_columns: (split..n_columns).collect(),
        }
    }

    /// Plan that offloads exactly the last `n_dev` columns.
    pub fn with_device_count(n_dev: usize, n_columns: usize) -> Result<Self, HeteroError> {
        if n_dev > n_columns {
            return Err(HeteroError::InvalidPlan(format!(
                "{n_dev} device columns out of {n_columns}"
            )));
        }
        let f = if n_columns == 0 {
            0.0
        } else {
            n_dev as f64 / n_columns as f64
        };
        Ok(Self::from_device_count(n_dev, n_columns, f))
    }

    pub fn n_columns(&self) -> usize {
        self.device_columns.len() + self.host_columns.len()
    }

    pub fn validate(&self, n_columns: usize) -> Result<(), HeteroError> {
        let mut seen = vec![false; n_columns];
        for &c in self.host_columns.iter().chain(&self.device_columns) {
            match seen.get_mut(c) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(HeteroError::InvalidPlan(format!("column {c} assigned twice"))),
                None => {
                    return Err(HeteroError::InvalidPlan(format!(
                        "column {c} outside chunk of {n_columns}"
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(HeteroError::InvalidPlan("some columns are unassigned".into()));
        }
        Ok(())
    }
}

/// `f_device = R_device / (R_host + R_device)`, device takes the tail.
pub fn plan_partition(
    r_host: f64,
    r_device: f64,
    n_columns: usize,
) -> Result<PartitionPlan, HeteroError> {
    if !(r_host > 0.0 && r_device > 0.0 && r_host.is_finite() && r_device.is_finite()) {
        return Err(HeteroError::InvalidPlan(format!(
            "rates must be positive, got host {r_host}, device {r_device}"
        )));
    }
    PartitionPlan::from_fraction(r_device / (r_host + r_device), n_columns)
}

/// Pool throughputs in columns per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub r_host: f64,
    pub r_device: f64,
}

impl Calibration {
    pub fn plan(&self, n_columns: usize) -> Result<PartitionPlan, HeteroError> {
        plan_partition(self.r_host, self.r_device, n_columns)
    }
}

/// Runs `inner` and then spins so each column takes `1 / speed_factor`
/// times as long. Speed factors above one are not emulated.
pub(crate) struct Throttled<'a, K: ?Sized> {
    pub inner: &'a K,
    pub speed_factor: f64,
}

impl<T: Real, K: ColumnKernel<T> + ?Sized> ColumnKernel<T> for Throttled<'_, K> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn column(&self, column: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError> {
        let t0 = Instant::now();
        let out = self.inner.column(column);
        if self.speed_factor < 1.0 {
            let target = t0.elapsed().div_f64(self.speed_factor);
            spin_until(t0 + target);
        }
        out
    }
}

fn spin_until(deadline: Instant) {
    let mut x = 0u64;
    while Instant::now() < deadline {
        x = black_box(x.wrapping_add(1));
    }
}

pub(crate) fn pool_spec(pool: &PoolProfile) -> ScheduleSpec {
    ScheduleSpec::dynamic(1, pool.n_workers)
}

/// Seconds the pool needs for `columns` of `chunk`, and the outputs.
pub(crate) fn run_on_pool<T: Real, K: ColumnKernel<T> + ?Sized>(
    columns: &[ColumnState<T>],
    kernel: &K,
    pool: &PoolProfile,
    mode: ExecMode,
) -> Result<(Vec<ColumnOutput<T>>, f64), HeteroError> {
    if columns.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    match mode {
        ExecMode::Simulated => {
            let outs: Vec<_> = columns
                .iter()
                .map(|c| kernel.column(c))
                .collect::<Result<_, _>>()?;
            let work: f64 = outs.iter().map(|o| column_cost_s(o.work_units)).sum();
            Ok((outs, pool.drain_time(work)))
        }
        ExecMode::Measured => {
            let throttled = Throttled {
                inner: kernel,
                speed_factor: pool.speed_factor,
            };
            let t0 = Instant::now();
            let (outs, _) = run_columns(columns, &throttled, &pool_spec(pool))?;
            Ok((outs, t0.elapsed().as_secs_f64()))
        }
    }
}

/// Aggregate throughput of each pool on `sample`.
pub fn calibrate<T: Real, K: ColumnKernel<T> + ?Sized>(
    sample: &Chunk<T>,
    kernel: &K,
    host: &PoolProfile,
    device: &PoolProfile,
    mode: ExecMode,
) -> Result<Calibration, HeteroError> {
    host.validate()?;
    device.validate()?;
    if sample.len() < MIN_CALIBRATION_COLUMNS {
        return Err(HeteroError::Calibration(format!(
            "sample has {} columns, need at least {MIN_CALIBRATION_COLUMNS}",
            sample.len()
        )));
    }
    let n = sample.len() as f64;
    let rate = |pool: &PoolProfile| -> Result<f64, HeteroError> {
        let (_, secs) = run_on_pool(sample.columns(), kernel, pool, mode)?;
        let r = n / secs;
        if !(r > 0.0 && r.is_finite()) {
            return Err(HeteroError::Calibration(format!(
                "{} pool throughput {r} columns/s from {secs} s",
                pool.name
            )));
        }
        Ok(r)
    };
    Ok(Calibration {
        r_host: rate(host)?,
        r_device: rate(device)?,
    })
}

/// Repeats [`calibrate`] and summarises both rates.
pub fn calibrate_repeated<T: Real, K: ColumnKernel<T> + ?Sized>(
    sample: &Chunk<T>,
    kernel: &K,
    host: &PoolProfile,
    device: &PoolProfile,
    mode: ExecMode,
    repeats: usize,
) -> Result<(Timing, Timing), HeteroError> {
    let runs = (0..repeats.max(1))
        .map(|_| calibrate(sample, kernel, host, device, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        Timing::from_samples(runs.iter().map(|c| c.r_host).collect()),
        Timing::from_samples(runs.iter().map(|c| c.r_device).collect()),
    ))
}

pub(crate) fn sleep_for(secs: f64) {
    if secs > 0.0 && secs.is_finite() {
        std::thread::sleep(Duration::from_secs_f64(secs));
    }
}
