use proptest::prelude::*;

use convproxy::bench::{extrapolate_savings, ExperimentConfig};
use convproxy::hetero::{pack, unpack, ArrayData, NamedArray, PartitionPlan};
use convproxy::layout::{Orientation, PadChoice};
use convproxy::physics::KernelVariant;
use convproxy::scheduler::{simulate_schedule, ScheduleSpec, SimCosts, Strategy as Sched};
use convproxy::validate::perturb_lsb;

fn array_data() -> impl Strategy<Value = ArrayData> {
    prop_oneof![
        prop::collection::vec(any::<u64>().prop_map(f64::from_bits), 0..40).prop_map(ArrayData::F64),
        prop::collection::vec(any::<u32>().prop_map(f32::from_bits), 0..40).prop_map(ArrayData::F32),
        prop::collection::vec(any::<u64>(), 0..40).prop_map(ArrayData::U64),
        prop::collection::vec(any::<u8>(), 0..40).prop_map(ArrayData::U8),
    ]
}

fn bits(a: &ArrayData) -> Vec<u64> {
    match a {
        ArrayData::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
        ArrayData::F32(v) => v.iter().map(|x| u64::from(x.to_bits())).collect(),
        ArrayData::U64(v) => v.clone(),
        ArrayData::U8(v) => v.iter().map(|&x| u64::from(x)).collect(),
    }
}

fn schedule() -> impl Strategy<Value = Sched> {
    prop::sample::select(Sched::ALL.to_vec())
}

proptest! {
    #[test]
    fn pack_round_trip_is_bit_exact(sets in prop::collection::vec(array_data(), 1..12)) {
        let arrays: Vec<NamedArray> = sets
            .into_iter()
            .enumerate()
            .map(|(i, d)| NamedArray::new(format!("a{i}"), d))
            .collect();
        let buffer = pack(&arrays).unwrap();
        let total: usize = arrays.iter().map(|a| a.data.byte_len()).sum();
        prop_assert_eq!(buffer.payload_bytes(), total + buffer.padding_bytes());
        let back = unpack(&buffer).unwrap();
        prop_assert_eq!(back.len(), arrays.len());
        for (a, b) in arrays.iter().zip(&back) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.data.dtype(), b.data.dtype());
            prop_assert_eq!(bits(&a.data), bits(&b.data));
        }
    }

    #[test]
    fn greedy_makespan_bound(
        work in prop::collection::vec(0.0f64..100.0, 1..200),
        p in 1usize..17,
    ) {
        let out = simulate_schedule(&work, &ScheduleSpec::dynamic(1, p), &SimCosts::default()).unwrap();
        let sum: f64 = work.iter().sum();
        let max = work.iter().copied().fold(0.0, f64::max);
        let bound = sum / p as f64 + (1.0 - 1.0 / p as f64) * max;
        prop_assert!(out.makespan <= bound * (1.0 + 1e-12) + 1e-12);
        prop_assert!(out.makespan >= sum / p as f64 * (1.0 - 1e-12));
        prop_assert!(out.makespan >= max);
    }

    #[test]
    fn every_strategy_dispatches_each_column_once(
        n in 0usize..300,
        p in 1usize..17,
        chunk in 1usize..9,
        s in schedule(),
    ) {
        let work = vec![1.0; n];
        let out = simulate_schedule(&work, &ScheduleSpec::new(s, chunk, p), &SimCosts::default()).unwrap();
        prop_assert_eq!(out.dispatched.iter().sum::<usize>(), n);
        if let Some(map) = ScheduleSpec::new(s, chunk, p).static_assignment(n) {
            prop_assert!(map.iter().all(|&t| t < p));
        }
    }

    #[test]
    fn perturbation_is_an_involution(xs in prop::collection::vec(any::<f64>(), 1..64)) {
        let finite: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
        prop_assume!(!finite.is_empty());
        let once = perturb_lsb(&finite).unwrap();
        let twice = perturb_lsb(&once).unwrap();
        for (a, b) in finite.iter().zip(&twice) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in finite.iter().zip(&once) {
            prop_assert!(*b == a.next_up() || *b == a.next_down() || (a.abs() == 0.0 && b.abs() == f64::from_bits(1)));
        }
    }

    #[test]
    fn extrapolation_is_linear(
        base in 1.0f64..1e4,
        frac in 0.0f64..1.0,
        days in 0.5f64..30.0,
        years in 1.0f64..2000.0,
        k in 0.1f64..10.0,
    ) {
        let opt = base * frac;
        let one = extrapolate_savings(base, opt, days, years).unwrap();
        let scaled = extrapolate_savings(k * base, k * opt, days, years).unwrap();
        prop_assert!((scaled - k * one).abs() <= 1e-9 * scaled.abs().max(1.0));
        let longer = extrapolate_savings(base, opt, days, k * years).unwrap();
        prop_assert!((longer - k * one).abs() <= 1e-9 * longer.abs().max(1.0));
        prop_assert!(one >= 0.0);
    }

    #[test]
    fn config_survives_toml(
        timesteps in 1usize..50,
        reps in 1usize..9,
        threads in 1usize..64,
        chunk in 1usize..32,
        n in 1usize..5000,
        seed in any::<u64>(),
        pad in prop::option::of(0usize..16),
        level_outer in any::<bool>(),
        s in schedule(),
        v in prop::sample::select(KernelVariant::ALL.to_vec()),
    ) {
        let mut cfg = ExperimentConfig {
            timesteps,
            repetitions: reps,
            kernel_variant: v,
            ..Default::default()
        };
        cfg.schedule = ScheduleSpec::new(s, chunk, threads);
        cfg.grid.n_columns = n;
        cfg.grid.seed = seed;
        cfg.layout.pad = pad.map_or(PadChoice::Auto, PadChoice::Elems);
        cfg.layout.orientation = if level_outer { Orientation::LevelOuter } else { Orientation::ColumnOuter };
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn partition_plan_covers_columns(f in 0.0f64..=1.0, n in 0usize..2000) {
        let plan = PartitionPlan::from_fraction(f, n).unwrap();
        prop_assert_eq!(plan.n_columns(), n);
        prop_assert_eq!(plan.device_columns.len(), (f * n as f64).round() as usize);
        let mut all: Vec<usize> = plan.host_columns.iter().chain(&plan.device_columns).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        // Device takes a contiguous tail.
        prop_assert!(plan.device_columns.iter().enumerate().all(|(i, &c)| c == n - plan.device_columns.len() + i));
    }
}

#[test]
fn strategy_names_parse() {
    for s in Sched::ALL {
        assert_eq!(s.as_str().parse::<Sched>().unwrap(), s);
    }
}
