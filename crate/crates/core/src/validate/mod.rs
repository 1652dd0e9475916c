//! Reproducibility checks: bitwise comparison, least-significant-bit input
//! perturbation and RMS error-growth curves.

use std::io::Write;
use std::path::Path;

use crate::model::{Model, ModelError, ModelSetup};
use crate::num::Real;
use crate::physics::{ColumnOutput, ColumnState};

#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("value {value} at index {index} is not finite")]
    NonFinite { index: usize, value: f64 },
    #[error("shape mismatch: {left} vs {right} values")]
    ShapeMismatch { left: usize, right: usize },
    #[error("baseline and modified runs must share the grid")]
    GridMismatch,
    #[error("{run} run failed at timestep {timestep}: {source}")]
    Run {
        run: &'static str,
        timestep: usize,
        #[source]
        source: ModelError,
    },
    #[error("{run} run produced a non-finite temperature at timestep {timestep}")]
    Diverged { run: &'static str, timestep: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_finite<T: Real>(values: &[T]) -> Result<(), ValidateError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ValidateError::NonFinite {
            index,
            value: values[index].to_f64().unwrap_or(f64::NAN),
        }),
        None => Ok(()),
    }
}

/// Flips the least significant significand bit of every value. Zero maps
/// to the smallest subnormal of the same sign.
pub fn perturb_lsb<T: Real>(values: &[T]) -> Result<Vec<T>, ValidateError> {
    check_finite(values)?;
    Ok(values.iter().map(|v| v.flip_lsb()).collect())
}

/// Columns with temperature and humidity perturbed by one bit.
pub fn perturb_columns<T: Real>(
    columns: &[ColumnState<T>],
) -> Result<Vec<ColumnState<T>>, ValidateError> {
    columns
        .iter()
        .map(|c| {
            let t = perturb_lsb(c.temperature())?;
            let q = perturb_lsb(c.humidity())?;
            Ok(c.evolved(t, q).expect("perturbation keeps the column shape"))
        })
        .collect()
}

/// `sqrt(mean((a - b)^2))`, accumulated in `f64`.
pub fn rms_diff<T: Real>(a: &[T], b: &[T]) -> Result<f64, ValidateError> {
    if a.len() != b.len() {
        return Err(ValidateError::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_finite(a)?;
    check_finite(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.to_f64().unwrap_or(f64::NAN) - y.to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffLocation {
    /// Position in the output list.
    pub index: usize,
    pub col_id: usize,
    pub field: &'static str,
    pub level: Option<usize>,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitwiseReport {
    pub equal: bool,
    pub first_diff: Option<DiffLocation>,
}

/// Exact bit comparison of two output sets, column by column.
pub fn bitwise_equal<T: Real>(
    a: &[ColumnOutput<T>],
    b: &[ColumnOutput<T>],
) -> Result<BitwiseReport, ValidateError> {
    if a.len() != b.len() {
        return Err(ValidateError::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    for (index, (x, y)) in a.iter().zip(b).enumerate() {
        let loc = |field, level, l: f64, r: f64| DiffLocation {
            index,
            col_id: x.col_id,
            field,
            level,
            left: l,
            right: r,
        };
        let diff = if x.col_id != y.col_id {
            Some(loc("col_id", None, x.col_id as f64, y.col_id as f64))
        } else if x.tend_t.len() != y.tend_t.len() || x.tend_q.len() != y.tend_q.len() {
            return Err(ValidateError::ShapeMismatch {
                left: x.tend_t.len(),
                right: y.tend_t.len(),
            });
        } else if x.precip.to_raw() != y.precip.to_raw() {
            Some(loc("precip", None, f(x.precip), f(y.precip)))
        } else if let Some(k) = (0..x.tend_t.len()).find(|&k| x.tend_t[k].to_raw() != y.tend_t[k].to_raw()) {
            Some(loc("tend_t", Some(k), f(x.tend_t[k]), f(y.tend_t[k])))
        } else if let Some(k) = (0..x.tend_q.len()).find(|&k| x.tend_q[k].to_raw() != y.tend_q[k].to_raw()) {
            Some(loc("tend_q", Some(k), f(x.tend_q[k]), f(y.tend_q[k])))
        } else if x.exited_early != y.exited_early {
            Some(loc("exited_early", None, u8::from(x.exited_early).into(), u8::from(y.exited_early).into()))
        } else {
            None
        };
        if diff.is_some() {
            return Ok(BitwiseReport {
                equal: false,
                first_diff: diff,
            });
        }
    }
    Ok(BitwiseReport {
        equal: true,
        first_diff: None,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorGrowthSeries {
    pub timesteps: Vec<usize>,
    pub rms_mod: Vec<f64>,
    pub rms_pert: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    pub passed: bool,
    /// Largest `rms_mod / rms_pert` over the series.
    pub worst_ratio: f64,
    pub first_violation: Option<usize>,
}

impl ErrorGrowthSeries {
    /// Pointwise check of `rms_mod[t] <= rms_pert[t]`.
    pub fn envelope(&self) -> EnvelopeCheck {
        let mut worst = 0.0f64;
        let mut first = None;
        for ((&t, &m), &p) in self.timesteps.iter().zip(&self.rms_mod).zip(&self.rms_pert) {
            let ratio = match (m, p) {
                (m, _) if m == 0.0 => 0.0,
                (_, p) if p == 0.0 => f64::INFINITY,
                (m, p) => m / p,
            };
            worst = worst.max(ratio);
            if m > p && first.is_none() {
                first = Some(t);
            }
        }
        EnvelopeCheck {
            passed: first.is_none(),
            worst_ratio: worst,
            first_violation: first,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ValidateError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestep", "rms_mod", "rms_pert"])?;
        for ((t, m), p) in self.timesteps.iter().zip(&self.rms_mod).zip(&self.rms_pert) {
            w.write_record([t.to_string(), m.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ValidateError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn step_checked<T: Real>(
    model: &mut Model<T>,
    run: &'static str,
    timestep: usize,
) -> Result<Vec<T>, ValidateError> {
    model.step().map_err(|source| match source {
        ModelError::Diverged { .. } => ValidateError::Diverged { run, timestep },
        source => ValidateError::Run {
            run,
            timestep,
            source,
        },
    })?;
    let t = model.temperature();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(ValidateError::Diverged { run, timestep });
    }
    Ok(t)
}

/// Runs baseline, modified and LSB-perturbed baseline for `steps` steps
/// and records the RMS temperature differences after each step.
pub fn error_growth<T: Real>(
    baseline: &ModelSetup,
    modified: &ModelSetup,
    steps: usize,
) -> Result<ErrorGrowthSeries, ValidateError> {
    if baseline.grid != modified.grid {
        return Err(ValidateError::GridMismatch);
    }
    let wrap = |run| move |source| ValidateError::Run { run, timestep: 0, source };
    let mut base = Model::<T>::new(baseline.clone()).map_err(wrap("baseline"))?;
    let mut modi = Model::<T>::new(modified.clone()).map_err(wrap("modified"))?;
    let perturbed = perturb_columns(base.columns())?;
    let mut pert = Model::from_columns(baseline.clone(), perturbed).map_err(wrap("perturbed"))?;

    let mut series = ErrorGrowthSeries::default();
    for t in 1..=steps {
        let b = step_checked(&mut base, "baseline", t)?;
        let m = step_checked(&mut modi, "modified", t)?;
        let p = step_checked(&mut pert, "perturbed", t)?;
        series.timesteps.push(t);
        series.rms_mod.push(rms_diff(&b, &m)?);
        series.rms_pert.push(rms_diff(&b, &p)?);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::GridSpec;

    #[test]
    fn perturb_examples() {
        assert_eq!(perturb_lsb(&[1.0f64]).unwrap()[0], 1.0 + f64::EPSILON);
        let z = perturb_lsb(&[0.0f64]).unwrap()[0];
        assert_eq!(z, f64::from_bits(1));
        assert!(z > 0.0);
        let x = [3.25f64, -7.0e-300, 1.0e300];
        assert_eq!(perturb_lsb(&perturb_lsb(&x).unwrap()).unwrap(), x);
        assert!(perturb_lsb(&[1.0, f64::NAN]).is_err());
        assert!(perturb_lsb(&[f32::INFINITY]).is_err());
    }

    #[test]
    fn rms_examples() {
        assert_eq!(rms_diff(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rms_diff(&[3.0f64, 4.0], &[0.0, 0.0]).unwrap();
        assert!((r - 3.5355).abs() < 1e-4);
        assert!(rms_diff(&[1.0f64], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bitwise_locates_first_difference() {
        let a = vec![ColumnOutput::<f64>::zeroed(0, 3), ColumnOutput::zeroed(1, 3)];
        let mut b = a.clone();
        assert!(bitwise_equal(&a, &b).unwrap().equal);
        b[1].tend_q[2] = -0.0;
        let r = bitwise_equal(&a, &b).unwrap();
        assert!(!r.equal);
        let d = r.first_diff.unwrap();
        assert_eq!((d.index, d.field, d.level), (1, "tend_q", Some(2)));
        assert!(bitwise_equal(&a, &b[..1]).is_err());
    }

    #[test]
    fn identical_setups_have_zero_error_and_visible_perturbation() {
        let setup = ModelSetup {
            grid: GridSpec::new(32, 30, 4),
            ..Default::default()
        };
        let s = error_growth::<f64>(&setup, &setup, 5).unwrap();
        assert!(s.rms_mod.iter().all(|v| *v == 0.0));
        assert!(s.rms_pert[0] > 0.0);
        assert!(s.envelope().passed);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("timestep,rms_mod,rms_pert\n1,0,"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn envelope_reports_violation() {
        let s = ErrorGrowthSeries {
            timesteps: vec![1, 2, 3],
            rms_mod: vec![0.0, 2.0, 1.0],
            rms_pert: vec![1.0, 1.0, 4.0],
        };
        let e = s.envelope();
        assert!(!e.passed);
        assert_eq!(e.first_violation, Some(2));
        assert_eq!(e.worst_ratio, 2.0);
    }
}
