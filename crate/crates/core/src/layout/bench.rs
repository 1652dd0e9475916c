use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use crate::layout::{Field2D, LayoutError, Orientation};
use crate::num::Real;

/// Columns taken per dispatch in the write loop.
pub const WRITE_LOOP_DISPATCH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteMode {
    /// Store a distinct value in every logical cell of both fields.
    WriteValues,
    /// Zero every cell a column owns, including its padding when the
    /// padding sits inside the column.
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteLoopResult {
    pub seconds: f64,
    pub elements_written: u64,
    pub elements_per_second: f64,
}

/// Value stored at `(col, level)` by [`WriteMode::WriteValues`].
pub fn written_value<T: Real>(col: usize, level: usize, which: usize) -> T {
    let v = (col * 1000 + level) as f64 * 0.5;
    T::lit(if which == 0 { v } else { -v })
}

/// Threads fill two fields column by column under dynamic dispatch of
/// [`WRITE_LOOP_DISPATCH`] columns, `passes` times.
pub fn write_loop_bench<T: Real>(
    a: &mut Field2D<T>,
    b: &mut Field2D<T>,
    n_threads: usize,
    mode: WriteMode,
    passes: usize,
) -> Result<WriteLoopResult, LayoutError> {
    if n_threads == 0 {
        return Err(LayoutError::NoThreads);
    }
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n_cols != sb.n_cols || sa.n_levels != sb.n_levels {
        return Err(LayoutError::ShapeMismatch);
    }
    let n_cols = sa.n_cols;
    let wa = a.writer();
    let wb = b.writer();
    let cursors: Vec<AtomicUsize> = (0..passes).map(|_| AtomicUsize::new(0)).collect();
    let barrier = Barrier::new(n_threads);
    let written = AtomicUsize::new(0);

    let start = Instant::now();
    thread::scope(|scope| {
        for _ in 0..n_threads {
            let (wa, wb, cursors, barrier, written) = (&wa, &wb, &cursors, &barrier, &written);
            scope.spawn(move || {
                let mut count = 0usize;
                for cursor in cursors {
                    loop {
                        let s = cursor.fetch_add(WRITE_LOOP_DISPATCH, Ordering::Relaxed);
                        if s >= n_cols {
                            break;
                        }
                        for col in s..(s + WRITE_LOOP_DISPATCH).min(n_cols) {
                            for (which, w) in [wa, wb].into_iter().enumerate() {
                                let shape = w.shape();
                                let extra = match (mode, shape.orientation) {
                                    (WriteMode::ZeroFill, Orientation::ColumnOuter) => {
                                        shape.pad_elems
                                    }
                                    _ => 0,
                                };
                                for level in 0..shape.n_levels + extra {
                                    let value = match mode {
                                        WriteMode::WriteValues => written_value(col, level, which),
                                        WriteMode::ZeroFill => T::zero(),
                                    };
                                    let idx = match shape.orientation {
                                        Orientation::ColumnOuter => col * shape.row_stride() + level,
                                        Orientation::LevelOuter => shape.index(col, level),
                                    };
                                    // SAFETY: within a pass each column index is
                                    // handed to exactly one thread, and passes are
                                    // separated by the barrier.
                                    unsafe { w.write_raw(idx, value) };
                                    count += 1;
                                }
                            }
                        }
                    }
                    barrier.wait();
                }
                written.fetch_add(count, Ordering::Relaxed);
            });
        }
    });
    let seconds = start.elapsed().as_secs_f64();
    let elements_written = written.load(Ordering::Relaxed) as u64;
    Ok(WriteLoopResult {
        seconds,
        elements_written,
        elements_per_second: if seconds > 0.0 {
            elements_written as f64 / seconds
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{CacheSpec, PadChoice};

    #[test]
    fn layouts_hold_identical_values() {
        let cache = CacheSpec::default();
        let mut results = Vec::new();
        for (orientation, pad) in [
            (Orientation::LevelOuter, PadChoice::Elems(0)),
            (Orientation::ColumnOuter, PadChoice::Elems(0)),
            (Orientation::ColumnOuter, PadChoice::Auto),
        ] {
            let mut a = Field2D::<f64>::with_pad(37, 30, orientation, pad, &cache);
            let mut b = Field2D::<f64>::with_pad(37, 30, orientation, pad, &cache);
            let r = write_loop_bench(&mut a, &mut b, 3, WriteMode::WriteValues, 2).unwrap();
            assert_eq!(r.elements_written, 2 * 2 * 37 * 30);
            assert!(a.padding_is_zero() && b.padding_is_zero());
            assert_eq!(a.get(5, 7), written_value::<f64>(5, 7, 0));
            assert_eq!(b.get(36, 29), written_value::<f64>(36, 29, 1));
            results.push((a, b));
        }
        for (a, b) in &results[1..] {
            assert!(a.logical_eq(&results[0].0));
            assert!(b.logical_eq(&results[0].1));
        }
    }

    #[test]
    fn zero_fill_clears_everything() {
        let cache = CacheSpec::default();
        let mut a = Field2D::<f32>::with_pad(9, 30, Orientation::ColumnOuter, PadChoice::Auto, &cache);
        let mut b = a.clone();
        for i in 0..9 {
            for k in 0..30 {
                a.set(i, k, 1.0);
                b.set(i, k, 2.0);
            }
        }
        write_loop_bench(&mut a, &mut b, 2, WriteMode::ZeroFill, 1).unwrap();
        assert!(a.storage().iter().chain(b.storage()).all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cache = CacheSpec::default();
        let mut a = Field2D::<f64>::new(4, 3, Orientation::LevelOuter, 0, &cache);
        let mut b = Field2D::<f64>::new(5, 3, Orientation::LevelOuter, 0, &cache);
        assert_eq!(
            write_loop_bench(&mut a, &mut b, 2, WriteMode::WriteValues, 1).unwrap_err(),
            LayoutError::ShapeMismatch
        );
        let mut c = a.clone();
        assert_eq!(
            write_loop_bench(&mut a, &mut c, 0, WriteMode::WriteValues, 1).unwrap_err(),
            LayoutError::NoThreads
        );
    }
}
