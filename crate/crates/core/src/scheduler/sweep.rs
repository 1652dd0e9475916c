use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::physics::{Chunk, ColumnKernel};
use crate::scheduler::{
    column_cost_s, run_parallel, simulate_makespan, ExecMode, ScheduleError, ScheduleSpec,
    Strategy, Timing,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omp_chunk_size: usize,
    pub timing: Timing,
}

/// Loop wall time as a function of the dynamic dispatch chunk size.
///
/// Measured mode times `repetitions` real runs per size. Simulated mode
/// runs the kernel once for its work units and evaluates the
/// discrete-event model, so every repetition is identical.
pub fn chunk_size_sweep<T, K>(
    chunk: &Chunk<T>,
    kernel: &K,
    base: &ScheduleSpec,
    sizes: &[usize],
    repetitions: usize,
    mode: ExecMode,
    grab_overhead: f64,
) -> Result<Vec<SweepPoint>, ScheduleError>
where
    T: Real,
    K: ColumnKernel<T> + ?Sized,
{
    let repetitions = repetitions.max(1);
    let costs: Option<Vec<f64>> = match mode {
        ExecMode::Simulated => Some(
            kernel
                .run_chunk(chunk)?
                .iter()
                .map(|o| column_cost_s(o.work_units))
                .collect(),
        ),
        ExecMode::Measured => None,
    };
    sizes
        .iter()
        .map(|&size| {
            let spec = ScheduleSpec {
                strategy: Strategy::Dynamic,
                omp_chunk_size: size,
                ..*base
            };
            let samples = match &costs {
                Some(costs) => {
                    vec![simulate_makespan(costs, &spec, grab_overhead)?; repetitions]
                }
                None => (0..repetitions)
                    .map(|_| run_parallel(chunk, kernel, &spec).map(|(_, m)| m.wall_s))
                    .collect::<Result<_, _>>()?,
            };
            Ok(SweepPoint {
                omp_chunk_size: size,
                timing: Timing::from_samples(samples),
            })
        })
        .collect()
}
