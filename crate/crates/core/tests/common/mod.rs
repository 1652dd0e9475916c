//! Scalar reference kernels written directly in `f64`.
#![allow(dead_code)]

use convproxy::physics::{ColumnOutput, ColumnState};

fn reference_temperature(k: usize, levels: usize) -> f64 {
    300.0 - 60.0 * k as f64 / (levels - 1) as f64
}

pub fn newton(y: f64, mut t: f64) -> (f64, u64) {
    let mut iters = 0;
    loop {
        let e = (0.05 * t).exp();
        let r = e + 0.01 * t - y;
        if r.abs() <= 1e-12 {
            return (t, iters);
        }
        assert!(iters < 100, "reference solve did not converge");
        t = t - r / (0.05 * e + 0.01);
        iters += 1;
    }
}

pub fn guess(y: f64, s: f64) -> f64 {
    20.0 * y.ln() + 1.0 + 60.0 * s
}

/// Scalar deep convection, naive arithmetic.
pub fn ref_deep(col: &ColumnState<f64>, threshold: f64) -> ColumnOutput<f64> {
    let n = col.levels();
    let s = col.instability();
    let mut out = ColumnOutput::zeroed(col.col_id(), n);
    if s <= threshold {
        return out;
    }
    let (t, q) = (col.temperature(), col.humidity());
    let mut work = 0;
    let mut mflux = vec![0.0; n];
    for k in 0..n {
        let y = 1.0 + 0.01 * t[k];
        let (root, it) = newton(y, guess(y, s));
        work += it;
        let c = 1.0 + 10.0 * q[k];
        mflux[k] = root * s * 0.01 / c / c;
    }
    for k in 0..n {
        let y = 1.0 + 100.0 * q[k];
        let (root, it) = newton(y, guess(y, s));
        work += it;
        let c = 1.0 + 10.0 * q[k];
        let cond = mflux[k] * q[k] * root * 1.0 / c / c;
        out.tend_q[k] = -cond * 1e-3;
        out.tend_t[k] = 2.0 * cond - 0.01 * s * (t[k] - reference_temperature(k, n));
        out.precip = out.precip + cond * (1.0 / n as f64);
    }
    out.work_units = work;
    out
}

/// Scalar shallow convection, naive arithmetic.
pub fn ref_shallow(col: &ColumnState<f64>) -> ColumnOutput<f64> {
    const EXIT: [f64; 4] = [0.05, 0.15, 0.25, 0.35];
    const GAIN: [f64; 4] = [0.2, 0.15, 0.1, 0.05];
    let n = col.levels();
    let s = col.instability();
    let (t, q) = (col.temperature(), col.humidity());
    let mut out = ColumnOutput::zeroed(col.col_id(), n);
    let mut energy = 0.0;
    for phase in 0..4 {
        for k in 0..n {
            energy = energy + s * q[k] * 100.0 + (t[k] - reference_temperature(k, n)) * 0.1;
            let es = (0.05 * (t[k] - 273.15)).exp();
            let c = 1.0 + 10.0 * q[k];
            let heat = es * q[k] * GAIN[phase] / c / c;
            out.tend_t[k] += heat;
            out.tend_q[k] -= heat * 1e-3;
            out.precip += heat * (1.0 / n as f64);
        }
        out.work_units += n as u64;
        if !(energy / ((phase + 1) * n) as f64 >= EXIT[phase]) {
            let mut early = ColumnOutput::zeroed(col.col_id(), n);
            early.exited_early = true;
            early.work_units = out.work_units;
            return early;
        }
    }
    out
}
