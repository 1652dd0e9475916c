//! Discrete-event model of the scheduling strategies.

use crate::scheduler::{DataEnvPolicy, RunMetrics, ScheduleError, ScheduleSpec, Strategy};

/// Work units a unit-speed worker completes per simulated second.
pub const SIM_UNITS_PER_SECOND: f64 = 1.0e7;
/// Modeled memcpy bandwidth for data-environment copies.
pub const MEMCPY_BYTES_PER_SECOND: f64 = 5.0e9;

/// Simulated seconds for one column: one unit of per-column overhead plus
/// the kernel's inner iterations.
pub fn column_cost_s(work_units: u64) -> f64 {
    (1 + work_units) as f64 / SIM_UNITS_PER_SECOND
}

/// Modeled per-worker copy time for a data-environment policy.
pub fn modeled_copy_s(policy: &DataEnvPolicy) -> f64 {
    policy.bytes_per_worker() as f64 / MEMCPY_BYTES_PER_SECOND
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimCosts {
    /// Charged to a worker every time it takes a dispatch block (every
    /// column for task-per-column).
    pub grab_overhead: f64,
    /// Charged to every worker before its first dispatch.
    pub worker_startup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub makespan: f64,
    /// Time each worker spent executing column work.
    pub busy: Vec<f64>,
    pub finish: Vec<f64>,
    pub dispatched: Vec<usize>,
    pub grabs: Vec<usize>,
}

/// Simulates one loop over columns with per-column costs `work`.
///
/// Dynamic and task strategies are greedy: the worker with the earliest
/// free time (lowest id on ties) takes the next block. Static strategies
/// follow the precomputed block map.
pub fn simulate_schedule(
    work: &[f64],
    spec: &ScheduleSpec,
    costs: &SimCosts,
) -> Result<SimOutcome, ScheduleError> {
    spec.validate()?;
    if let Some((index, &value)) = work.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(ScheduleError::NegativeCost { index, value });
    }
    let p = spec.n_threads;
    let n = work.len();
    let mut clock = vec![costs.worker_startup; p];
    let mut busy = vec![0.0; p];
    let mut dispatched = vec![0; p];
    let mut grabs = vec![0; p];

    let mut take = |t: usize, s: usize, e: usize, clock: &mut [f64]| {
        let block: f64 = work[s..e].iter().sum();
        clock[t] += costs.grab_overhead + block;
        busy[t] += block;
        dispatched[t] += e - s;
        grabs[t] += 1;
    };

    match spec.static_blocks(n) {
        Some(blocks) => {
            for (t, s, e) in blocks {
                take(t, s, e, &mut clock);
            }
        }
        None => {
            let grab = match spec.strategy {
                Strategy::TaskPerColumn => 1,
                _ => spec.omp_chunk_size,
            };
            let mut cursor = 0;
            while cursor < n {
                let t = (0..p)
                    .min_by(|&a, &b| clock[a].total_cmp(&clock[b]).then(a.cmp(&b)))
                    .expect("at least one worker");
                let end = (cursor + grab).min(n);
                take(t, cursor, end, &mut clock);
                cursor = end;
            }
        }
    }
    let makespan = clock.iter().copied().fold(0.0, f64::max);
    Ok(SimOutcome {
        makespan,
        busy,
        finish: clock,
        dispatched,
        grabs,
    })
}

pub fn simulate_makespan(
    work: &[f64],
    spec: &ScheduleSpec,
    grab_overhead: f64,
) -> Result<f64, ScheduleError> {
    simulate_schedule(
        work,
        spec,
        &SimCosts {
            grab_overhead,
            worker_startup: 0.0,
        },
    )
    .map(|o| o.makespan)
}

/// Simulated-time [`RunMetrics`] for a loop whose columns reported
/// `work_units`; copy costs follow the schedule's data-environment policy.
pub fn simulate_run(
    work_units: &[u64],
    spec: &ScheduleSpec,
    grab_overhead: f64,
) -> Result<RunMetrics, ScheduleError> {
    let work: Vec<f64> = work_units.iter().map(|&w| column_cost_s(w)).collect();
    let copy = modeled_copy_s(&spec.data_env);
    let out = simulate_schedule(
        &work,
        spec,
        &SimCosts {
            grab_overhead,
            worker_startup: copy,
        },
    )?;
    Ok(RunMetrics {
        wall_s: out.makespan,
        busy_s: out.busy,
        dispatched: out.dispatched,
        copy_s: copy * spec.n_threads as f64,
    })
}
