//! Experiment configs, the timestep driver behind every benchmark, CSV
//! records and report tables.

mod config;
mod record;
mod report;

pub use config::{ExperimentConfig, LayoutConfig};
pub use record::{append_records, read_records, read_records_from, write_records, BenchRecord, CSV_HEADER};
pub use report::{extrapolation_report, table_report, Report, Template, REFERENCE_SAVINGS_DAYS};

use crate::hetero::{hetero_summary, HeteroError, HeteroMetrics, HeteroSummary};
use crate::layout::{
    line_collision_count, write_loop_bench, CacheSpec, Field2D, LayoutError, Orientation,
    PadChoice, WriteMode, WRITE_LOOP_DISPATCH,
};
use crate::model::{HeteroSetup, Model, ModelError};
use crate::scheduler::{imbalance_ratio, overhead_pct, DataEnvMode, DataEnvPolicy, Strategy};
use crate::validate::{ErrorGrowthSeries, ValidateError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hetero(#[from] HeteroError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error("no `{0}` records to report")]
    MissingFamily(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Records plus the state the last repetition ended in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<BenchRecord>,
    pub final_temperature: Vec<f64>,
    pub dispatched_per_step: Vec<usize>,
    /// Per-step offload metrics of the last repetition, chunks summed.
    pub offloads: Vec<HeteroMetrics>,
}

fn sum_offloads(steps: &[HeteroMetrics], timestep: usize) -> HeteroMetrics {
    let mut m = HeteroMetrics {
        timestep,
        ..Default::default()
    };
    for s in steps {
        m.host_columns += s.host_columns;
        m.device_columns += s.device_columns;
        m.host_busy += s.host_busy;
        m.device_busy += s.device_busy;
        m.host_finish += s.host_finish;
        m.device_finish += s.device_finish;
        m.transfer_s += s.transfer_s;
        m.bytes_transferred += s.bytes_transferred;
        m.n_transfers += s.n_transfers;
        m.wall_s += s.wall_s;
    }
    m
}

/// Runs `timesteps` steps over all chunks, `repetitions` times, one record
/// per repetition.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, BenchError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let setup = cfg.model_setup();
    let mut outcome = ExperimentOutcome {
        records: Vec::with_capacity(cfg.repetitions),
        final_temperature: Vec::new(),
        dispatched_per_step: Vec::new(),
        offloads: Vec::new(),
    };
    for rep in 0..cfg.repetitions {
        let mut model = Model::<f64>::new(setup.clone())?;
        let mut wall = 0.0;
        let mut busy: Vec<f64> = Vec::new();
        let mut copy = 0.0;
        let mut work = 0u64;
        let mut dispatched = Vec::with_capacity(cfg.timesteps);
        let mut offloads = Vec::new();
        for t in 0..cfg.timesteps {
            let report = model.step()?;
            let combined = report.combined();
            wall += report.wall_s();
            copy += combined.copy_s;
            if busy.len() < combined.busy_s.len() {
                busy.resize(combined.busy_s.len(), 0.0);
            }
            busy.iter_mut().zip(&combined.busy_s).for_each(|(a, b)| *a += b);
            work += report.work_units;
            dispatched.push(report.columns_dispatched);
            if !report.offloads.is_empty() {
                offloads.push(sum_offloads(&report.offloads, t));
            }
        }

        let mut record = BenchRecord::new(&cfg.experiment, &hash, rep)
            .note("mode", cfg.mode)
            .note("variant", cfg.kernel_variant)
            .note("layout", cfg.layout.orientation)
            .note("pad", cfg.layout.pad)
            .note("timesteps", cfg.timesteps)
            .note("columns_per_step", dispatched[0])
            .note("work_units", work);
        record.wall_s = wall;
        record.copy_s = copy;
        if offloads.is_empty() {
            let mean_busy = if busy.is_empty() { 0.0 } else { busy.iter().sum::<f64>() / busy.len() as f64 };
            record.overhead_pct = overhead_pct(wall, mean_busy);
            record.imbalance = imbalance_ratio(&busy);
            record = record
                .note("strategy", cfg.schedule.strategy)
                .note("omp_chunk", cfg.schedule.omp_chunk_size)
                .note("threads", cfg.schedule.n_threads)
                .note("data_env", cfg.schedule.data_env.mode)
                .note("mean_busy_s", mean_busy);
        } else {
            let host: f64 = offloads.iter().map(|m| m.host_busy).sum();
            let device: f64 = offloads.iter().map(|m| m.device_busy).sum();
            record.transfer_s = offloads.iter().map(|m| m.transfer_s).sum();
            record.overhead_pct = overhead_pct(wall, host.max(device));
            record.imbalance = imbalance_ratio(&[host, device]);
            record = record
                .note("f_device", model.f_device().unwrap_or(0.0))
                .note("host_s", host)
                .note("device_s", device)
                .note("bytes", offloads.iter().map(|m| m.bytes_transferred).sum::<usize>());
        }
        outcome.records.push(record);
        outcome.final_temperature = model.temperature();
        outcome.dispatched_per_step = dispatched;
        outcome.offloads = offloads;
    }
    Ok(outcome)
}

/// Dynamic schedule over `sizes` dispatch chunk sizes.
pub fn sweep_chunk(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<BenchRecord>, BenchError> {
    if sizes.is_empty() {
        return Err(BenchError::InvalidArgument("no chunk sizes".into()));
    }
    let mut records = Vec::new();
    for &size in sizes {
        let mut c = cfg.clone();
        c.experiment = "chunk-sweep".into();
        c.schedule.strategy = Strategy::Dynamic;
        c.schedule.omp_chunk_size = size;
        records.extend(run_experiment(&c)?.records);
    }
    Ok(records)
}

/// Every data-environment policy on the same config.
pub fn bench_firstprivate(cfg: &ExperimentConfig) -> Result<Vec<BenchRecord>, BenchError> {
    let mut records = Vec::new();
    for mode in DataEnvMode::ALL {
        let mut c = cfg.clone();
        c.experiment = "firstprivate".into();
        c.schedule.data_env = DataEnvPolicy {
            mode,
            ..cfg.schedule.data_env
        };
        records.extend(run_experiment(&c)?.records);
    }
    Ok(records)
}

/// Column-to-thread map when dispatch blocks are dealt round-robin, the
/// steady-state pattern of a dynamic schedule over equal-cost columns.
pub fn round_robin_assignment(n_cols: usize, n_threads: usize, block: usize) -> Vec<usize> {
    (0..n_cols).map(|i| (i / block) % n_threads.max(1)).collect()
}

/// Write loop over two output fields for the unpadded level-outer layout
/// and the padded column-outer layout.
pub fn bench_falseshare(cfg: &ExperimentConfig, passes: usize) -> Result<Vec<BenchRecord>, BenchError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let cache = CacheSpec::default();
    let (n, levels, threads) = (cfg.grid.n_columns, cfg.grid.levels, cfg.schedule.n_threads);
    let assignment = round_robin_assignment(n, threads, WRITE_LOOP_DISPATCH);
    let mut records = Vec::new();
    for rep in 0..cfg.repetitions {
        for (orientation, pad) in [
            (Orientation::LevelOuter, PadChoice::Elems(0)),
            (Orientation::ColumnOuter, cfg.layout.pad),
        ] {
            let mut a = Field2D::<f64>::with_pad(n, levels, orientation, pad, &cache);
            let mut b = Field2D::<f64>::with_pad(n, levels, orientation, pad, &cache);
            let r = write_loop_bench(&mut a, &mut b, threads, WriteMode::WriteValues, passes.max(1))?;
            let collisions = line_collision_count(&a.shape(), &assignment, &cache)?;
            let mut rec = BenchRecord::new("falseshare", &hash, rep)
                .note("layout", orientation)
                .note("pad", a.shape().pad_elems)
                .note("threads", threads)
                .note("elements_per_s", r.elements_per_second)
                .note("collisions", collisions);
            rec.wall_s = r.seconds;
            records.push(rec);
        }
    }
    Ok(records)
}

/// Host-only, device-only and partitioned runs of the same config.
pub fn bench_hetero(cfg: &ExperimentConfig) -> Result<(Vec<BenchRecord>, HeteroSummary), BenchError> {
    let setup = cfg.hetero.unwrap_or_default();
    let mut records = Vec::new();
    let mut steps: Vec<Vec<HeteroMetrics>> = Vec::new();
    for (label, f) in [
        ("host-only", Some(0.0)),
        ("device-only", Some(1.0)),
        ("partitioned", setup.f_device),
    ] {
        let mut c = cfg.clone();
        c.experiment = "hetero".into();
        c.hetero = Some(HeteroSetup { f_device: f, ..setup });
        let out = run_experiment(&c)?;
        records.extend(out.records.into_iter().map(|r| r.note("hetero_mode", label)));
        steps.push(out.offloads);
    }
    let summary = hetero_summary(&steps[0], &steps[1], &steps[2])?;
    Ok((records, summary))
}

pub fn error_growth_records(config_hash: &str, series: &ErrorGrowthSeries) -> Vec<BenchRecord> {
    series
        .timesteps
        .iter()
        .zip(&series.rms_mod)
        .zip(&series.rms_pert)
        .map(|((&t, &m), &p)| {
            BenchRecord::new("error-growth", config_hash, 0)
                .note("timestep", t)
                .note("rms_mod", m)
                .note("rms_pert", p)
        })
        .collect()
}

/// Wall-clock days saved over a `years`-long run when a `days`-day run
/// drops from `t_base_s` to `t_opt_s` seconds.
pub fn extrapolate_savings(t_base_s: f64, t_opt_s: f64, days: f64, years: f64) -> Result<f64, BenchError> {
    if !(days > 0.0) {
        return Err(BenchError::InvalidArgument(format!("simulated days {days} must be > 0")));
    }
    if !(t_opt_s >= 0.0 && t_base_s >= t_opt_s) {
        return Err(BenchError::InvalidArgument(format!(
            "need t_base >= t_opt >= 0, got {t_base_s} and {t_opt_s}"
        )));
    }
    if !(years >= 0.0) {
        return Err(BenchError::InvalidArgument(format!("years {years} must be >= 0")));
    }
    Ok((t_base_s - t_opt_s) * (365.0 * years / days) / 86_400.0)
}
