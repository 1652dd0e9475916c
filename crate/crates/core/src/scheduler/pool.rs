use std::collections::VecDeque;
use std::hint::black_box;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use crate::num::Real;
use crate::physics::{Chunk, ColumnKernel, ColumnOutput, ColumnState};
use crate::scheduler::{DataEnvMode, RunMetrics, ScheduleError, ScheduleSpec, Strategy};

type ColumnResult<T> = (usize, Result<ColumnOutput<T>, ScheduleError>);
type Task<'a, T> = Box<dyn FnOnce() -> ColumnResult<T> + Send + 'a>;

enum WorkSource<'a, T> {
    Static(Vec<Vec<(usize, usize)>>),
    Dynamic { cursor: AtomicUsize, grab: usize },
    Tasks(Mutex<VecDeque<Task<'a, T>>>),
}

struct WorkerReport<T> {
    busy_s: f64,
    copy_s: f64,
    results: Vec<(usize, ColumnOutput<T>)>,
    error: Option<ScheduleError>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

fn run_one<T: Real, K: ColumnKernel<T> + ?Sized>(
    kernel: &K,
    column: &ColumnState<T>,
) -> Result<ColumnOutput<T>, ScheduleError> {
    match catch_unwind(AssertUnwindSafe(|| kernel.column(column))) {
        Ok(Ok(out)) => Ok(out),
        Ok(Err(e)) => Err(ScheduleError::Kernel(e)),
        Err(payload) => Err(ScheduleError::WorkerPanic {
            col_id: column.col_id(),
            message: panic_message(payload),
        }),
    }
}

/// Executes `kernel` over every column with the given schedule.
///
/// Outputs are returned in column order and do not depend on the strategy,
/// thread count or dispatch chunk size. Each worker performs its
/// data-environment copy before touching its first column.
pub fn run_columns<T, K>(
    columns: &[ColumnState<T>],
    kernel: &K,
    spec: &ScheduleSpec,
) -> Result<(Vec<ColumnOutput<T>>, RunMetrics), ScheduleError>
where
    T: Real,
    K: ColumnKernel<T> + ?Sized,
{
    spec.validate()?;
    let n = columns.len();
    let n_threads = spec.n_threads;

    let master_workspace: Vec<u8> = match spec.data_env.mode {
        DataEnvMode::CopyAll => (0..spec.data_env.workspace_bytes)
            .map(|i| (i % 251) as u8)
            .collect(),
        _ => Vec::new(),
    };
    let master_scalars = [1.0f64, 2.0, 3.0, 4.0];
    let abort = AtomicBool::new(false);

    let start = Instant::now();
    let source = match spec.strategy {
        Strategy::StaticBlock | Strategy::StaticCyclic => {
            let mut per_thread = vec![Vec::new(); n_threads];
            for (t, s, e) in spec.static_blocks(n).unwrap_or_default() {
                per_thread[t].push((s, e));
            }
            WorkSource::Static(per_thread)
        }
        Strategy::Dynamic => WorkSource::Dynamic {
            cursor: AtomicUsize::new(0),
            grab: spec.omp_chunk_size,
        },
        Strategy::TaskPerColumn => {
            let tasks: VecDeque<Task<'_, T>> = columns
                .iter()
                .enumerate()
                .map(|(i, col)| {
                    Box::new(move || (i, run_one(kernel, col))) as Task<'_, T>
                })
                .collect();
            WorkSource::Tasks(Mutex::new(tasks))
        }
    };

    let reports: Vec<WorkerReport<T>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..n_threads)
            .map(|tid| {
                let source = &source;
                let abort = &abort;
                let master_workspace = &master_workspace;
                let master_scalars = &master_scalars;
                scope.spawn(move || {
                    let mut report = WorkerReport {
                        busy_s: 0.0,
                        copy_s: 0.0,
                        results: Vec::new(),
                        error: None,
                    };

                    let copy_start = Instant::now();
                    let private_workspace = match spec.data_env.mode {
                        DataEnvMode::CopyAll => master_workspace.to_vec(),
                        _ => Vec::new(),
                    };
                    let private_scalars = match spec.data_env.mode {
                        DataEnvMode::CopyScalarsOnly => black_box(*master_scalars),
                        _ => [0.0; 4],
                    };
                    black_box((&private_workspace, &private_scalars));
                    report.copy_s = copy_start.elapsed().as_secs_f64();

                    let execute = |i: usize, report: &mut WorkerReport<T>| -> bool {
                        if abort.load(Ordering::Relaxed) {
                            return false;
                        }
                        let t0 = Instant::now();
                        let res = run_one(kernel, &columns[i]);
                        report.busy_s += t0.elapsed().as_secs_f64();
                        match res {
                            Ok(out) => {
                                report.results.push((i, out));
                                true
                            }
                            Err(e) => {
                                abort.store(true, Ordering::Relaxed);
                                report.error = Some(e);
                                false
                            }
                        }
                    };

                    match source {
                        WorkSource::Static(blocks) => {
                            'outer: for &(s, e) in &blocks[tid] {
                                for i in s..e {
                                    if !execute(i, &mut report) {
                                        break 'outer;
                                    }
                                }
                            }
                        }
                        WorkSource::Dynamic { cursor, grab } => 'outer: loop {
                            let s = cursor.fetch_add(*grab, Ordering::Relaxed);
                            if s >= n {
                                break;
                            }
                            for i in s..(s + grab).min(n) {
                                if !execute(i, &mut report) {
                                    break 'outer;
                                }
                            }
                        },
                        WorkSource::Tasks(queue) => loop {
                            if abort.load(Ordering::Relaxed) {
                                break;
                            }
                            let task = queue.lock().unwrap_or_else(|p| p.into_inner()).pop_front();
                            let Some(task) = task else { break };
                            let t0 = Instant::now();
                            let (i, res) = task();
                            report.busy_s += t0.elapsed().as_secs_f64();
                            match res {
                                Ok(out) => report.results.push((i, out)),
                                Err(e) => {
                                    abort.store(true, Ordering::Relaxed);
                                    report.error = Some(e);
                                    break;
                                }
                            }
                        },
                    }
                    drop(private_workspace);
                    report
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker bookkeeping panicked"))
            .collect()
    });
    let wall_s = start.elapsed().as_secs_f64();

    if let Some(err) = reports
        .iter()
        .filter_map(|r| r.error.clone())
        .min_by_key(|e| e.col_id().unwrap_or(usize::MAX))
    {
        return Err(err);
    }

    let mut slots: Vec<Option<ColumnOutput<T>>> = (0..n).map(|_| None).collect();
    let mut metrics = RunMetrics {
        wall_s,
        busy_s: Vec::with_capacity(n_threads),
        dispatched: Vec::with_capacity(n_threads),
        copy_s: 0.0,
    };
    for report in reports {
        metrics.busy_s.push(report.busy_s.min(wall_s));
        metrics.dispatched.push(report.results.len());
        metrics.copy_s += report.copy_s;
        for (i, out) in report.results {
            slots[i] = Some(out);
        }
    }
    let outputs = slots
        .into_iter()
        .map(|o| o.expect("every column is dispatched exactly once"))
        .collect();
    Ok((outputs, metrics))
}

/// [`run_columns`] over one model chunk.
pub fn run_parallel<T, K>(
    chunk: &Chunk<T>,
    kernel: &K,
    spec: &ScheduleSpec,
) -> Result<(Vec<ColumnOutput<T>>, RunMetrics), ScheduleError>
where
    T: Real,
    K: ColumnKernel<T> + ?Sized,
{
    run_columns(chunk.columns(), kernel, spec)
}
