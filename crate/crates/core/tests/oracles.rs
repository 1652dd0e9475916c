//! Independent reference implementations checked against the library.

mod common;

use std::collections::HashMap;

use common::{guess, ref_deep, ref_shallow};

use convproxy::layout::{compute_padding, line_collision_count, CacheSpec, Field2D, Orientation};
use convproxy::physics::{
    deep_convection, ientropy_solve, shallow_convection, splitmix_draw, splitmix_unit, Chunk,
    ColumnOutput, GridSpec, KernelVariant,
};
use convproxy::scheduler::{run_columns, simulate_makespan, ScheduleSpec, Strategy};

fn assert_bitwise(a: &[ColumnOutput<f64>], b: &[ColumnOutput<f64>]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.col_id, y.col_id);
        assert_eq!(x.precip.to_bits(), y.precip.to_bits(), "precip col {}", x.col_id);
        assert_eq!(x.work_units, y.work_units, "work col {}", x.col_id);
        assert_eq!(x.exited_early, y.exited_early, "exit col {}", x.col_id);
        for k in 0..x.tend_t.len() {
            assert_eq!(x.tend_t[k].to_bits(), y.tend_t[k].to_bits(), "tend_t col {} level {k}", x.col_id);
            assert_eq!(x.tend_q[k].to_bits(), y.tend_q[k].to_bits(), "tend_q col {} level {k}", x.col_id);
        }
    }
}

#[test]
fn kernels_match_scalar_reference_on_random_grids() {
    for seed in 0..10u64 {
        let grid = GridSpec::new(256, 30, 1000 + seed);
        let chunk = Chunk::new(0, grid.generate::<f64>().unwrap()).unwrap();
        let deep_ref: Vec<_> = chunk.columns().iter().map(|c| ref_deep(c, grid.activity_threshold)).collect();
        let shallow_ref: Vec<_> = chunk.columns().iter().map(ref_shallow).collect();

        let deep = deep_convection(&chunk, grid.activity_threshold, KernelVariant::Naive).unwrap();
        let shallow = shallow_convection(&chunk, KernelVariant::Naive).unwrap();
        assert_bitwise(&deep, &deep_ref);
        assert_bitwise(&shallow, &shallow_ref);

        // Same answer through the thread pool.
        let kernel = convproxy::physics::DeepConvection::new(grid.activity_threshold, KernelVariant::Naive);
        let (par, _) = run_columns(chunk.columns(), &kernel, &ScheduleSpec::dynamic(3, 4)).unwrap();
        assert_bitwise(&par, &deep_ref);

        // The grids exercise every branch.
        assert!(deep_ref.iter().any(|o| o.work_units > 0));
        assert!(deep_ref.iter().any(|o| o.work_units == 0));
        assert!(shallow_ref.iter().any(|o| o.exited_early));
        assert!(shallow_ref.iter().any(|o| !o.exited_early));
    }
}

fn bisect(y: f64) -> f64 {
    let f = |t: f64| (0.05 * t).exp() + 0.01 * t - y;
    let (mut lo, mut hi) = (-200.0, 200.0);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn newton_root_matches_bisection() {
    for i in 0..500 {
        let y = 1.0 + 9.0 * splitmix_unit(7, i);
        let s = splitmix_unit(8, i);
        let root = bisect(y);
        let solved = ientropy_solve(y, guess(y, s), 1e-12).unwrap();
        assert!((solved.root - root).abs() < 1e-9, "y={y}: {} vs {root}", solved.root);

        let single = ientropy_solve(y as f32, guess(y, s) as f32, 1e-5).unwrap();
        assert!((f64::from(single.root) - root).abs() < 1e-2 * (1.0 + root.abs()));
    }
}

#[test]
fn padding_is_smallest_line_multiple() {
    for line in [16usize, 32, 64, 128] {
        for elem in [1usize, 2, 4, 8, 12] {
            for n in 1..100 {
                let brute = (0..).find(|p| ((n + p) * elem) % line == 0).unwrap();
                assert_eq!(compute_padding(n, elem, line), brute, "n={n} e={elem} line={line}");
            }
        }
    }
}

/// Enumerates the byte address of every written element.
fn brute_collisions(field: &Field2D<f64>, assignment: &[usize], line: usize) -> usize {
    let shape = field.shape();
    let mut owners: HashMap<usize, Vec<usize>> = HashMap::new();
    for col in 0..shape.n_cols {
        for level in 0..shape.n_levels {
            let addr = field.base_addr() + 8 * shape.index(col, level);
            owners.entry(addr / line).or_default().push(assignment[col]);
        }
    }
    owners
        .values()
        .filter(|ts| ts.iter().any(|t| *t != ts[0]))
        .count()
}

#[test]
fn collision_count_matches_enumeration() {
    let cache = CacheSpec::new(64).unwrap();
    for trial in 0..40u64 {
        let n = 1 + (splitmix_draw(3, trial) % 40) as usize;
        let levels = 1 + (splitmix_draw(4, trial) % 33) as usize;
        let threads = 1 + (splitmix_draw(5, trial) % 6) as usize;
        let assignment: Vec<usize> = (0..n as u64)
            .map(|c| (splitmix_draw(6 + trial, c) % threads as u64) as usize)
            .collect();
        for orientation in [Orientation::LevelOuter, Orientation::ColumnOuter] {
            for pad in [0, 1, 2, 5] {
                let field = Field2D::<f64>::new(n, levels, orientation, pad, &cache);
                assert_eq!(field.base_addr() % 64, 0);
                let got = line_collision_count(&field.shape(), &assignment, &cache).unwrap();
                assert_eq!(got, brute_collisions(&field, &assignment, 64));
            }
        }
    }
}

#[test]
fn static_block_makespan_by_hand() {
    // Blocks [3,3] and [2,2,2].
    let work = [3.0, 3.0, 2.0, 2.0, 2.0];
    assert_eq!(simulate_makespan(&work, &ScheduleSpec::static_block(2), 0.0).unwrap(), 6.0);
    // Greedy: w0 3, w1 3, w0 2, w1 2, w0 2.
    assert_eq!(simulate_makespan(&work, &ScheduleSpec::dynamic(1, 2), 0.0).unwrap(), 7.0);
    // Cyclic chunks of 2: w0 gets [3,3] and [2], w1 gets [2,2].
    let cyclic = ScheduleSpec::new(Strategy::StaticCyclic, 2, 2);
    assert_eq!(simulate_makespan(&work, &cyclic, 0.0).unwrap(), 8.0);
}
