use convproxy::bench::{run_experiment, ExperimentConfig};
use convproxy::hetero::{
    calibrate, hetero_summary, HeteroMetrics, OffloadEngine, PartitionPlan, PoolProfile,
    TransferModel,
};
use convproxy::physics::{
    Chunk, ColumnKernel, ColumnState, ConvectionSuite, GridSpec, KernelVariant,
};
use convproxy::scheduler::{column_cost_s, ExecMode};
use convproxy::validate::bitwise_equal;

fn suite() -> ConvectionSuite {
    ConvectionSuite::new(0.5, KernelVariant::Naive)
}

/// `n` copies of one active column, so every column costs the same.
fn uniform_chunk(n: usize) -> Chunk<f64> {
    let template = GridSpec {
        tropics_band: 1.0,
        ..GridSpec::new(1, 30, 5)
    }
    .generate::<f64>()
    .unwrap()
    .remove(0);
    let cols = (0..n)
        .map(|i| {
            ColumnState::new(
                i,
                template.instability(),
                template.temperature().to_vec(),
                template.humidity().to_vec(),
            )
            .unwrap()
        })
        .collect();
    Chunk::new(0, cols).unwrap()
}

fn column_cost(chunk: &Chunk<f64>) -> f64 {
    let out = ColumnKernel::<f64>::column(&suite(), &chunk.columns()[0]).unwrap();
    column_cost_s(out.work_units)
}

fn step(
    chunk: &Chunk<f64>,
    host: PoolProfile,
    device: PoolProfile,
    tm: TransferModel,
    plan: &PartitionPlan,
) -> HeteroMetrics {
    let mut engine = OffloadEngine::new(suite(), host, device, tm, ExecMode::Simulated).unwrap();
    engine.offload_step(chunk, plan, 0).unwrap().1
}

#[test]
fn table_pattern_reproduced_by_fitted_overhead() {
    const HOST_ONLY: f64 = 292.5;
    const DEVICE_ONLY: f64 = 744.3;
    const TOTAL: f64 = 421.6;
    let n = 1000;
    let chunk = uniform_chunk(n);
    let work = n as f64 * column_cost(&chunk);
    let host = PoolProfile::host(1).with_speed(work / HOST_ONLY);
    let device = PoolProfile::device(1).with_speed(work / DEVICE_ONLY);

    let free = TransferModel::free();
    let host_only = step(&chunk, host, device, free, &PartitionPlan::from_fraction(0.0, n).unwrap());
    let device_only = step(&chunk, host, device, free, &PartitionPlan::from_fraction(1.0, n).unwrap());
    assert!((host_only.wall_s - HOST_ONLY).abs() < 1e-9);
    assert!((device_only.wall_s - DEVICE_ONLY).abs() < 1e-9);

    let cal = calibrate(&chunk, &suite(), &host, &device, ExecMode::Simulated).unwrap();
    let plan = cal.plan(n).unwrap();
    let balanced = step(&chunk, host, device, free, &plan);
    let perfect = 1.0 / (1.0 / HOST_ONLY + 1.0 / DEVICE_ONLY);
    assert!((balanced.wall_s - perfect).abs() < 1.0, "{} vs {perfect}", balanced.wall_s);

    // Fit one setup cost per direction to the residual.
    let fitted = TransferModel {
        setup_s: (TOTAL - balanced.device_finish) / 2.0,
        bandwidth_bps: 1e300,
        ..TransferModel::default()
    };
    let partitioned = step(&chunk, host, device, fitted, &plan);
    let summary = hetero_summary(&[host_only], &[device_only], std::slice::from_ref(&partitioned)).unwrap();
    assert!((summary.total_s - TOTAL).abs() < 1e-6);
    assert!((summary.speedup_over_device() - 1.77).abs() < 0.01, "{}", summary.speedup_over_device());
    assert!(summary.speedup_over_host() < 1.0);
    assert!((summary.overhead_s - (TOTAL - partitioned.host_busy.max(partitioned.device_busy))).abs() < 1e-9);
}

#[test]
fn zero_cost_split_matches_closed_form() {
    let n = 512;
    let chunk = uniform_chunk(n);
    let (host, device) = (PoolProfile::host(16), PoolProfile::device(240).with_speed(0.05));
    let cal = calibrate(&chunk, &suite(), &host, &device, ExecMode::Simulated).unwrap();
    assert!((cal.r_device / cal.r_host - 0.75).abs() < 1e-12);
    let free = TransferModel::free();
    let host_only = step(&chunk, host, device, free, &PartitionPlan::from_fraction(0.0, n).unwrap());
    let part = step(&chunk, host, device, free, &cal.plan(n).unwrap());
    let expected = host_only.wall_s * cal.r_host / (cal.r_host + cal.r_device);
    assert!((part.wall_s - expected).abs() / expected < 0.05);
}

#[test]
fn partitioned_outputs_equal_single_pool() {
    let grid = GridSpec::new(96, 30, 11);
    let chunk = Chunk::new(3, grid.generate::<f64>().unwrap()).unwrap();
    let (reference, _) = {
        let mut e = OffloadEngine::new(suite(), PoolProfile::host(1), PoolProfile::device(1), TransferModel::free(), ExecMode::Simulated).unwrap();
        e.offload_step(&chunk, &PartitionPlan::from_fraction(0.0, 96).unwrap(), 0).unwrap()
    };
    for mode in [ExecMode::Simulated, ExecMode::Measured] {
        for tm in [TransferModel::free(), TransferModel { packed: false, ..TransferModel::free() }] {
            let mut engine = OffloadEngine::new(
                suite(),
                PoolProfile::host(3),
                PoolProfile::device(2).with_speed(1.0),
                tm,
                mode,
            )
            .unwrap();
            for (t, f) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
                let plan = PartitionPlan::from_fraction(f, 96).unwrap();
                let (outs, m) = engine.offload_step(&chunk, &plan, t).unwrap();
                assert!(bitwise_equal(&reference, &outs).unwrap().equal, "f={f} {mode}");
                assert_eq!(m.device_columns, plan.device_columns.len());
                if f == 0.0 {
                    assert_eq!(m.transfer_s, 0.0);
                    assert_eq!(m.n_transfers, 0);
                }
                if f == 1.0 {
                    assert_eq!(m.host_columns, 0);
                    assert_eq!(m.host_busy, 0.0);
                }
            }
        }
    }
}

#[test]
fn resident_scalars_save_exactly_their_bytes() {
    let chunk = uniform_chunk(64);
    let plan = PartitionPlan::from_fraction(0.5, 64).unwrap();
    let steps = 6;
    let total = |resident: bool| -> usize {
        let tm = TransferModel { resident_scalars: resident, ..TransferModel::default() };
        let mut engine = OffloadEngine::new(suite(), PoolProfile::host(4), PoolProfile::device(8), tm, ExecMode::Simulated).unwrap();
        (0..steps)
            .map(|t| engine.offload_step(&chunk, &plan, t).unwrap().1.bytes_transferred)
            .sum()
    };
    let saved = total(false) - total(true);
    assert_eq!(saved, OffloadEngine::<ConvectionSuite>::scalar_bytes::<f64>(32) * (steps - 1));
    assert_eq!(OffloadEngine::<ConvectionSuite>::scalar_bytes::<f32>(10), 10 * 12 + 32);
}

#[test]
fn setup_cost_never_reduces_wall_time() {
    let grid = GridSpec::new(128, 30, 2);
    let chunk = Chunk::new(0, grid.generate::<f64>().unwrap()).unwrap();
    for f in [0.1, 0.3, 0.6, 1.0] {
        let plan = PartitionPlan::from_fraction(f, 128).unwrap();
        for packed in [true, false] {
            let mut last = 0.0;
            for setup in [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1.0] {
                let tm = TransferModel { setup_s: setup, packed, ..TransferModel::default() };
                let wall = step(&chunk, PoolProfile::host(8), PoolProfile::device(30), tm, &plan).wall_s;
                assert!(wall >= last, "f={f} packed={packed} setup={setup}: {wall} < {last}");
                last = wall;
            }
        }
    }
}

#[test]
fn unpacked_pays_one_setup_per_array() {
    let tm = TransferModel { setup_s: 1e-3, bandwidth_bps: 1e9, ..TransferModel::default() };
    let unpacked = TransferModel { packed: false, ..tm };
    assert_eq!(tm.transfers_for(220), 1);
    assert_eq!(unpacked.transfers_for(220), 220);
    let ephemeral = TransferModel { persistent_buffers: false, ..tm };
    assert!((ephemeral.transfer_time(220, 0) - tm.transfer_time(220, 0) - 1e-3).abs() < 1e-15);
}

#[test]
fn full_grid_dispatches_every_column() {
    let text = r#"
timesteps = 2
repetitions = 1
mode = "simulated"
model_chunk_size = 864

[grid]
n_columns = 13824

[schedule]
strategy = "dynamic"
n_threads = 8
"#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.dispatched_per_step, vec![13824, 13824]);
    assert_eq!(out.records[0].get("columns_per_step"), Some("13824"));
    assert!(out.final_temperature.iter().all(|t| t.is_finite()));
}
