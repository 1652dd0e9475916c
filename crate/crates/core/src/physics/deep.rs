//! Deep convection proxy: an entrainment loop followed by a precipitation
//! loop, each performing one iterative solve per level.

use crate::num::Real;
use crate::physics::column::reference_temperature;
use crate::physics::ientropy::{displaced_guess, ientropy_solve_with};
use crate::physics::{ColumnKernel, ColumnOutput, ColumnState, KernelError, KernelVariant};

pub const ENTRAIN_GAIN: f64 = 0.01;
pub const PRECIP_GAIN: f64 = 1.0;
pub const LATENT: f64 = 2.0;
pub const MOISTURE_SINK: f64 = 1e-3;
pub const RELAX: f64 = 0.01;
pub const HUMIDITY_DIVISOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepConvection {
    /// Columns with instability at or below this are skipped.
    pub threshold: f64,
    pub variant: KernelVariant,
}

impl DeepConvection {
    pub fn new(threshold: f64, variant: KernelVariant) -> Self {
        Self { threshold, variant }
    }
}

impl<T: Real> ColumnKernel<T> for DeepConvection {
    fn name(&self) -> &'static str {
        "deep"
    }

    fn column(&self, col: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError> {
        let levels = col.levels();
        let s = col.instability();
        if s <= T::lit(self.threshold) {
            return Ok(ColumnOutput::zeroed(col.col_id(), levels));
        }
        let exp = self.variant.exp_fn::<T>();
        let reduced = self.variant.strength_reduced();
        let tol = T::newton_tol();
        let temp = col.temperature();
        let hum = col.humidity();
        let fail = |level, source| KernelError {
            kernel: "deep",
            col_id: col.col_id(),
            level: Some(level),
            source,
        };

        let entrain_scale = s * T::lit(ENTRAIN_GAIN);
        let level_weight = T::one() / T::lit(levels as f64);
        let mut work = 0u64;
        let mut mflux = vec![T::zero(); levels];

        // Entrainment loop.
        for k in 0..levels {
            let y = T::one() + T::lit(0.01) * temp[k];
            let sol = ientropy_solve_with(y, displaced_guess(y, s), tol, exp)
                .map_err(|e| fail(k, e))?;
            work += u64::from(sol.iters);
            let c = T::one() + T::lit(HUMIDITY_DIVISOR) * hum[k];
            mflux[k] = if reduced {
                sol.root * entrain_scale / (c * c)
            } else {
                sol.root * s * T::lit(ENTRAIN_GAIN) / c / c
            };
        }

        // Precipitation loop.
        let mut out = ColumnOutput::zeroed(col.col_id(), levels);
        for k in 0..levels {
            let y = T::one() + T::lit(100.0) * hum[k];
            let sol = ientropy_solve_with(y, displaced_guess(y, s), tol, exp)
                .map_err(|e| fail(k, e))?;
            work += u64::from(sol.iters);
            let c = T::one() + T::lit(HUMIDITY_DIVISOR) * hum[k];
            let anomaly = temp[k] - T::lit(reference_temperature(k, levels));
            let (cond, dp) = if reduced {
                (mflux[k] * hum[k] * sol.root * T::lit(PRECIP_GAIN) / (c * c), level_weight)
            } else {
                (
                    mflux[k] * hum[k] * sol.root * T::lit(PRECIP_GAIN) / c / c,
                    T::one() / T::lit(levels as f64),
                )
            };
            out.tend_q[k] = -cond * T::lit(MOISTURE_SINK);
            out.tend_t[k] = T::lit(LATENT) * cond - T::lit(RELAX) * s * anomaly;
            out.precip = out.precip + cond * dp;
        }
        out.work_units = work;
        Ok(out)
    }
}
