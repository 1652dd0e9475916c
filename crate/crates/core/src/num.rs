//! Scalar abstraction shared by every kernel and analysis routine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

use crate::hetero::ArrayData;

/// Floating-point scalar the kernels are generic over (`f32` or `f64`).
///
/// Beyond `num_traits::Float` this exposes the raw encoding, which the
/// reproducibility tooling needs for bit-level comparison and LSB
/// perturbation, and a conversion into packable array payloads.
pub trait Real:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Width of the encoding in bytes.
    const BYTES: usize;
    /// Number of explicitly stored significand bits.
    const SIGNIFICAND_BITS: u32;

    /// Converts an `f64` literal. Values used in this crate are always
    /// representable (possibly rounded), so this never fails.
    fn lit(v: f64) -> Self;

    /// Default absolute residual tolerance for the Newton solves.
    fn newton_tol() -> Self;

    /// Raw encoding widened to 64 bits.
    fn to_raw(self) -> u64;

    /// Inverse of [`Real::to_raw`]; high bits beyond the width are ignored.
    fn from_raw(bits: u64) -> Self;

    /// Flips the least significant bit of the stored significand.
    fn flip_lsb(self) -> Self {
        Self::from_raw(self.to_raw() ^ 1)
    }

    /// Spacing between `|self|` and the next representable value of larger
    /// magnitude. Only meaningful for finite values.
    fn ulp(self) -> Self {
        let a = self.abs();
        Self::from_raw(a.to_raw() + 1) - a
    }

    fn to_array(values: &[Self]) -> ArrayData;

    fn from_array(data: &ArrayData) -> Option<Vec<Self>>;
}

impl Real for f64 {
    const BYTES: usize = 8;
    const SIGNIFICAND_BITS: u32 = 52;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    fn newton_tol() -> Self {
        1e-12
    }

    #[inline]
    fn to_raw(self) -> u64 {
        self.to_bits()
    }

    #[inline]
    fn from_raw(bits: u64) -> Self {
        f64::from_bits(bits)
    }

    fn to_array(values: &[Self]) -> ArrayData {
        ArrayData::F64(values.to_vec())
    }

    fn from_array(data: &ArrayData) -> Option<Vec<Self>> {
        match data {
            ArrayData::F64(v) => Some(v.clone()),
            _ => None,
        }
    }
}

impl Real for f32 {
    const BYTES: usize = 4;
    const SIGNIFICAND_BITS: u32 = 23;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    fn newton_tol() -> Self {
        1e-5
    }

    #[inline]
    fn to_raw(self) -> u64 {
        u64::from(self.to_bits())
    }

    #[inline]
    fn from_raw(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }

    fn to_array(values: &[Self]) -> ArrayData {
        ArrayData::F32(values.to_vec())
    }

    fn from_array(data: &ArrayData) -> Option<Vec<Self>> {
        match data {
            ArrayData::F32(v) => Some(v.clone()),
            _ => None,
        }
    }
}

/// Declared relative error budget of [`poly_exp`].
pub const POLY_EXP_REL_BUDGET: f64 = 1e-7;

// Cody-Waite split of ln 2.
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const POLY_EXP_DEGREE: usize = 13;
const INV_FACT: [f64; POLY_EXP_DEGREE + 1] = {
    let mut t = [1.0f64; POLY_EXP_DEGREE + 1];
    let mut k = 1;
    while k <= POLY_EXP_DEGREE {
        t[k] = t[k - 1] / k as f64;
        k += 1;
    }
    t
};

/// Polynomial exponential: Cody-Waite range reduction to |r| <= ln2/2
/// followed by a degree-13 Taylor polynomial and exact scaling by 2^n.
///
/// Stands in for a vendor vector-math `exp`: results routinely differ from
/// the libm value in the last bits, staying far inside
/// [`POLY_EXP_REL_BUDGET`].
pub fn poly_exp<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x > T::lit(709.78) {
        return T::infinity();
    }
    if x < T::lit(-745.2) {
        return T::zero();
    }
    let n = (x * T::lit(std::f64::consts::LOG2_E)).round();
    let r = (x - n * T::lit(LN2_HI)) - n * T::lit(LN2_LO);

    let mut p = T::lit(INV_FACT[POLY_EXP_DEGREE]);
    for c in INV_FACT[..POLY_EXP_DEGREE].iter().rev() {
        p = p * r + T::lit(*c);
    }

    // Split the scaling so 2^n stays representable near the range ends.
    let n = n.to_i32().unwrap_or(0);
    let half = n / 2;
    let two = T::lit(2.0);
    p * two.powi(half) * two.powi(n - half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_lsb_of_one_is_next_up() {
        assert_eq!(1.0f64.flip_lsb(), 1.0 + f64::EPSILON);
        assert_eq!(1.0f32.flip_lsb(), 1.0 + f32::EPSILON);
    }

    #[test]
    fn ulp_matches_epsilon_scaling() {
        assert_eq!(1.0f64.ulp(), f64::EPSILON);
        assert_eq!(2.0f64.ulp(), 2.0 * f64::EPSILON);
        assert_eq!((-4.0f64).ulp(), 4.0 * f64::EPSILON);
        assert_eq!(0.0f64.ulp(), f64::from_bits(1));
    }

    #[test]
    fn poly_exp_within_budget_over_kernel_range() {
        // The kernels evaluate exp(0.05 T) for T in roughly [-20, 120] and
        // exp(0.05 (T - 273.15)) for T in [180, 360].
        let mut worst = 0.0f64;
        let mut differs = 0usize;
        let n = 200_000;
        for i in 0..=n {
            let x = -8.0 + 16.0 * i as f64 / n as f64;
            let exact = x.exp();
            let approx = poly_exp(x);
            if exact != approx {
                differs += 1;
            }
            worst = worst.max(((approx - exact) / exact).abs());
        }
        assert!(worst <= POLY_EXP_REL_BUDGET, "worst {worst:e}");
        assert!(worst < 1e-14, "worst {worst:e}");
        assert!(differs > 0, "variant should not be bitwise libm");
    }

    #[test]
    fn poly_exp_f32_within_budget_scaled_to_precision() {
        for i in 0..=1000 {
            let x = -8.0f32 + 16.0 * i as f32 / 1000.0;
            let rel = ((poly_exp(x) - x.exp()) / x.exp()).abs();
            assert!(rel < 1e-6, "x={x} rel={rel}");
        }
    }

    #[test]
    fn poly_exp_edges() {
        assert_eq!(poly_exp(0.0f64), 1.0);
        assert!(poly_exp(f64::NAN).is_nan());
        assert_eq!(poly_exp(1000.0f64), f64::INFINITY);
        assert_eq!(poly_exp(-1000.0f64), 0.0);
        let big = poly_exp(709.0f64);
        assert!(((big - 709.0f64.exp()) / 709.0f64.exp()).abs() < 1e-13);
    }
}
