//! Timestep driver: every step runs the convection suite over all chunks,
//! stores tendencies in layout-configurable fields, and advances the state.
//!
//! Between physics calls the temperature anomaly of every level evolves
//! under Lorenz-96 dynamics across the columns, so that differences between
//! two runs grow the way they do in a real atmosphere model.

use serde::{Deserialize, Serialize};

use crate::hetero::{
    calibrate, HeteroError, MIN_CALIBRATION_COLUMNS, HeteroMetrics, OffloadEngine, PartitionPlan, PoolProfile,
    TransferModel,
};
use crate::layout::{CacheSpec, Field2D, Orientation, PadChoice};
use crate::num::Real;
use crate::physics::{
    into_chunks, reference_temperature, Chunk, ColumnOutput, ColumnState,
    ConvectionSuite, GridSpec, KernelVariant, PhysicsError, DEFAULT_MODEL_CHUNK_SIZE,
};
use crate::scheduler::{
    run_parallel, simulate_run, ExecMode, RunMetrics, ScheduleError, ScheduleSpec,
};

/// Lorenz-96 forcing.
pub const L96_FORCING: f64 = 8.0;
pub const L96_SUBSTEPS: usize = 4;
pub const L96_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeteroSetup {
    pub host: PoolProfile,
    pub device: PoolProfile,
    pub transfer: TransferModel,
    /// Fixed device fraction; calibrated on the first chunk when absent.
    pub f_device: Option<f64>,
}

impl Default for HeteroSetup {
    fn default() -> Self {
        Self {
            host: PoolProfile::host(16),
            device: PoolProfile::device(60),
            transfer: TransferModel::default(),
            f_device: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetup {
    pub grid: GridSpec,
    pub model_chunk_size: usize,
    pub variant: KernelVariant,
    pub schedule: ScheduleSpec,
    /// Replaces the thread pool when present.
    pub hetero: Option<HeteroSetup>,
    pub orientation: Orientation,
    pub pad: PadChoice,
    pub mode: ExecMode,
    /// Simulated cost of one dispatch.
    pub grab_overhead_s: f64,
    pub dynamics: bool,
}

impl Default for ModelSetup {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            model_chunk_size: DEFAULT_MODEL_CHUNK_SIZE,
            variant: KernelVariant::Naive,
            schedule: ScheduleSpec::default(),
            hetero: None,
            orientation: Orientation::ColumnOuter,
            pad: PadChoice::Auto,
            mode: ExecMode::Measured,
            grab_overhead_s: 2.0e-6,
            dynamics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Hetero(#[from] HeteroError),
    #[error("state diverged at timestep {timestep}, column {col_id}, level {level}")]
    Diverged {
        timestep: usize,
        col_id: usize,
        level: usize,
    },
}

impl ModelError {
    pub fn col_id(&self) -> Option<usize> {
        match self {
            ModelError::Schedule(e) => e.col_id(),
            ModelError::Hetero(HeteroError::Schedule(e)) => e.col_id(),
            ModelError::Hetero(HeteroError::Kernel(e)) => Some(e.col_id),
            ModelError::Physics(PhysicsError::Kernel(e)) => Some(e.col_id),
            ModelError::Diverged { col_id, .. } => Some(*col_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub timestep: usize,
    /// Per-chunk pool metrics (empty in hetero runs).
    pub chunks: Vec<RunMetrics>,
    /// Per-chunk offload metrics (empty in pool runs).
    pub offloads: Vec<HeteroMetrics>,
    pub columns_dispatched: usize,
    pub work_units: u64,
}

impl StepReport {
    /// Chunk metrics summed: walls add, per-worker busy times add.
    pub fn combined(&self) -> RunMetrics {
        let mut out = RunMetrics::default();
        for m in &self.chunks {
            out.wall_s += m.wall_s;
            out.copy_s += m.copy_s;
            if out.busy_s.len() < m.busy_s.len() {
                out.busy_s.resize(m.busy_s.len(), 0.0);
                out.dispatched.resize(m.dispatched.len(), 0);
            }
            for (i, b) in m.busy_s.iter().enumerate() {
                out.busy_s[i] += b;
                out.dispatched[i] += m.dispatched[i];
            }
        }
        out
    }

    pub fn transfer_s(&self) -> f64 {
        self.offloads.iter().map(|m| m.transfer_s).sum()
    }

    pub fn wall_s(&self) -> f64 {
        self.chunks.iter().map(|m| m.wall_s).sum::<f64>()
            + self.offloads.iter().map(|m| m.wall_s).sum::<f64>()
    }
}

enum Executor {
    Pool,
    Hetero {
        engine: Box<OffloadEngine<ConvectionSuite>>,
        plan_f: Option<f64>,
    },
}

pub struct Model<T> {
    setup: ModelSetup,
    kernel: ConvectionSuite,
    columns: Vec<ColumnState<T>>,
    tend_t: Field2D<T>,
    tend_q: Field2D<T>,
    precip: Vec<T>,
    executor: Executor,
    timestep: usize,
}

impl<T: Real> Model<T> {
    pub fn new(setup: ModelSetup) -> Result<Self, ModelError> {
        let columns = setup.grid.generate()?;
        Self::from_columns(setup, columns)
    }

    pub fn from_columns(setup: ModelSetup, columns: Vec<ColumnState<T>>) -> Result<Self, ModelError> {
        setup.schedule.validate()?;
        if setup.model_chunk_size == 0 {
            return Err(PhysicsError::InvalidGrid("model_chunk_size must be >= 1".into()).into());
        }
        if let Some((i, c)) = columns.iter().enumerate().find(|(i, c)| c.col_id() != *i) {
            return Err(PhysicsError::InvalidColumn {
                col_id: c.col_id(),
                reason: format!("found at position {i}; ids must equal positions"),
            }
            .into());
        }
        let levels = columns.first().map_or(0, ColumnState::levels);
        if let Some(c) = columns.iter().find(|c| c.levels() != levels) {
            return Err(PhysicsError::MixedLevels {
                chunk_id: 0,
                expected: levels,
                found: c.levels(),
            }
            .into());
        }
        let kernel = ConvectionSuite::new(setup.grid.activity_threshold, setup.variant);
        let executor = match &setup.hetero {
            None => Executor::Pool,
            Some(h) => Executor::Hetero {
                engine: Box::new(OffloadEngine::new(kernel, h.host, h.device, h.transfer, setup.mode)?),
                plan_f: h.f_device,
            },
        };
        let cache = CacheSpec::default();
        let field = || Field2D::with_pad(columns.len(), levels, setup.orientation, setup.pad, &cache);
        Ok(Self {
            tend_t: field(),
            tend_q: field(),
            precip: vec![T::zero(); columns.len()],
            kernel,
            columns,
            executor,
            timestep: 0,
            setup,
        })
    }

    pub fn setup(&self) -> &ModelSetup {
        &self.setup
    }

    pub fn columns(&self) -> &[ColumnState<T>] {
        &self.columns
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn tend_t(&self) -> &Field2D<T> {
        &self.tend_t
    }

    pub fn tend_q(&self) -> &Field2D<T> {
        &self.tend_q
    }

    /// Device fraction in use; `None` before a calibrating run's first step.
    pub fn f_device(&self) -> Option<f64> {
        match &self.executor {
            Executor::Pool => None,
            Executor::Hetero { plan_f, .. } => *plan_f,
        }
    }

    pub fn precip(&self) -> &[T] {
        &self.precip
    }

    /// Temperature of every column, column-major.
    pub fn temperature(&self) -> Vec<T> {
        self.columns.iter().flat_map(|c| c.temperature().iter().copied()).collect()
    }

    /// Runs the physics of the current state without advancing it.
    pub fn physics(&mut self) -> Result<(Vec<ColumnOutput<T>>, StepReport), ModelError> {
        if let Executor::Hetero { engine, plan_f: plan_f @ None } = &mut self.executor {
            let take = self
                .columns
                .len()
                .min(self.setup.model_chunk_size.max(MIN_CALIBRATION_COLUMNS));
            let sample = Chunk::new(0, self.columns[..take].to_vec())?;
            let cal = calibrate(&sample, &self.kernel, engine.host(), engine.device(), self.setup.mode)?;
            *plan_f = Some(cal.r_device / (cal.r_host + cal.r_device));
        }
        let chunks = into_chunks(self.columns.clone(), self.setup.model_chunk_size)?;
        let mut report = StepReport {
            timestep: self.timestep,
            ..Default::default()
        };
        let mut outputs = Vec::with_capacity(self.columns.len());
        for chunk in &chunks {
            let outs = self.run_chunk(chunk, &mut report)?;
            report.columns_dispatched += outs.len();
            report.work_units += outs.iter().map(|o| o.work_units).sum::<u64>();
            outputs.extend(outs);
        }
        Ok((outputs, report))
    }

    fn run_chunk(
        &mut self,
        chunk: &Chunk<T>,
        report: &mut StepReport,
    ) -> Result<Vec<ColumnOutput<T>>, ModelError> {
        match &mut self.executor {
            Executor::Pool => {
                let (outs, measured) = run_parallel(chunk, &self.kernel, &self.setup.schedule)?;
                let metrics = match self.setup.mode {
                    ExecMode::Measured => measured,
                    ExecMode::Simulated => {
                        let work: Vec<u64> = outs.iter().map(|o| o.work_units).collect();
                        simulate_run(&work, &self.setup.schedule, self.setup.grab_overhead_s)?
                    }
                };
                report.chunks.push(metrics);
                Ok(outs)
            }
            Executor::Hetero { engine, plan_f } => {
                let f = plan_f.expect("fraction fixed before the first chunk");
                let plan = PartitionPlan::from_fraction(f, chunk.len())?;
                let (outs, metrics) = engine.offload_step(chunk, &plan, self.timestep)?;
                report.offloads.push(metrics);
                Ok(outs)
            }
        }
    }

    /// One full timestep: physics, field writes, state update.
    pub fn step(&mut self) -> Result<StepReport, ModelError> {
        let (outputs, report) = self.physics()?;
        for out in &outputs {
            let i = out.col_id;
            for (k, (&dt, &dq)) in out.tend_t.iter().zip(&out.tend_q).enumerate() {
                self.tend_t.set(i, k, dt);
                self.tend_q.set(i, k, dq);
            }
            self.precip[i] = out.precip;
        }
        self.advance()?;
        self.timestep += 1;
        Ok(report)
    }

    fn advance(&mut self) -> Result<(), ModelError> {
        let n = self.columns.len();
        let levels = self.columns.first().map_or(0, ColumnState::levels);
        let mut temp: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut hum: Vec<Vec<T>> = Vec::with_capacity(n);
        for (i, c) in self.columns.iter().enumerate() {
            temp.push((0..levels).map(|k| c.temperature()[k] + self.tend_t.get(i, k)).collect());
            hum.push(
                (0..levels)
                    .map(|k| (c.humidity()[k] + self.tend_q.get(i, k)).max(T::zero()))
                    .collect(),
            );
        }
        if self.setup.dynamics && n >= 4 {
            let mut anomaly = vec![T::zero(); n];
            for k in 0..levels {
                let reference = T::lit(reference_temperature(k, levels));
                for i in 0..n {
                    anomaly[i] = temp[i][k] - reference;
                }
                lorenz96(&mut anomaly, L96_SUBSTEPS, T::lit(L96_DT), T::lit(L96_FORCING));
                for i in 0..n {
                    temp[i][k] = reference + anomaly[i];
                }
            }
        }
        for (i, (t, q)) in temp.into_iter().zip(hum).enumerate() {
            if let Some(k) = t.iter().chain(&q).position(|v| !v.is_finite()) {
                return Err(ModelError::Diverged {
                    timestep: self.timestep,
                    col_id: i,
                    level: k % levels,
                });
            }
            self.columns[i] = self.columns[i].evolved(t, q)?;
        }
        Ok(())
    }
}

fn l96_rate<T: Real>(x: &[T], forcing: T, out: &mut [T]) {
    let n = x.len();
    for i in 0..n {
        let ip1 = x[(i + 1) % n];
        let im1 = x[(i + n - 1) % n];
        let im2 = x[(i + n - 2) % n];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

/// Classic fourth-order Runge-Kutta steps of the periodic Lorenz-96 system.
pub fn lorenz96<T: Real>(x: &mut [T], substeps: usize, dt: T, forcing: T) {
    let n = x.len();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    let mut tmp = vec![T::zero(); n];
    for _ in 0..substeps {
        l96_rate(x, forcing, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + half * dt * k1[i];
        }
        l96_rate(&tmp, forcing, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + half * dt * k2[i];
        }
        l96_rate(&tmp, forcing, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        l96_rate(&tmp, forcing, &mut k4);
        for i in 0..n {
            x[i] = x[i] + dt * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
    }
}
