//! Shallow convection proxy: four sequential phases, each followed by a
//! thermodynamic check that can abandon the column.

use crate::num::Real;
use crate::physics::column::reference_temperature;
use crate::physics::{ColumnKernel, ColumnOutput, ColumnState, KernelError, KernelVariant};

pub const PHASES: usize = 4;
/// Minimum running mean buoyancy required to continue past each phase.
pub const EXIT_THRESHOLDS: [f64; PHASES] = [0.05, 0.15, 0.25, 0.35];
pub const HEAT_GAIN: [f64; PHASES] = [0.2, 0.15, 0.1, 0.05];
pub const BUOYANCY_MOISTURE_GAIN: f64 = 100.0;
pub const BUOYANCY_THERMAL_GAIN: f64 = 0.1;
pub const MOISTURE_SINK: f64 = 1e-3;
pub const HUMIDITY_DIVISOR: f64 = 10.0;
pub const FREEZING: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShallowConvection {
    pub variant: KernelVariant,
}

impl ShallowConvection {
    pub fn new(variant: KernelVariant) -> Self {
        Self { variant }
    }

    /// Work charged for each completed phase.
    pub fn phase_cost(levels: usize) -> u64 {
        levels as u64
    }
}

impl<T: Real> ColumnKernel<T> for ShallowConvection {
    fn name(&self) -> &'static str {
        "shallow"
    }

    fn column(&self, col: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError> {
        let levels = col.levels();
        let s = col.instability();
        let temp = col.temperature();
        let hum = col.humidity();
        let exp = self.variant.exp_fn::<T>();
        let reduced = self.variant.strength_reduced();
        let level_weight = T::one() / T::lit(levels as f64);

        let mut tend_t = vec![T::zero(); levels];
        let mut tend_q = vec![T::zero(); levels];
        let mut precip = T::zero();
        let mut energy = T::zero();
        let mut work = 0u64;

        for phase in 0..PHASES {
            let gain = T::lit(HEAT_GAIN[phase]);
            for k in 0..levels {
                let anomaly = temp[k] - T::lit(reference_temperature(k, levels));
                energy = energy
                    + s * hum[k] * T::lit(BUOYANCY_MOISTURE_GAIN)
                    + anomaly * T::lit(BUOYANCY_THERMAL_GAIN);

                let es = exp(T::lit(0.05) * (temp[k] - T::lit(FREEZING)));
                let c = T::one() + T::lit(HUMIDITY_DIVISOR) * hum[k];
                let (heat, dp) = if reduced {
                    (es * hum[k] * gain / (c * c), level_weight)
                } else {
                    (
                        es * hum[k] * T::lit(HEAT_GAIN[phase]) / c / c,
                        T::one() / T::lit(levels as f64),
                    )
                };
                tend_t[k] = tend_t[k] + heat;
                tend_q[k] = tend_q[k] - heat * T::lit(MOISTURE_SINK);
                precip = precip + heat * dp;
            }
            work += Self::phase_cost(levels);

            let mean = energy / T::lit(((phase + 1) * levels) as f64);
            if !(mean >= T::lit(EXIT_THRESHOLDS[phase])) {
                let mut out = ColumnOutput::zeroed(col.col_id(), levels);
                out.exited_early = true;
                out.work_units = work;
                return Ok(out);
            }
        }

        Ok(ColumnOutput {
            col_id: col.col_id(),
            precip,
            tend_t,
            tend_q,
            exited_early: false,
            work_units: work,
        })
    }
}
