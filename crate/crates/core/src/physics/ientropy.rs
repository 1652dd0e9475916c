//! Iterative per-level thermodynamic solve used by the deep convection loops.
//!
//! Solves `f(T) = exp(0.05 T) + 0.01 T = y` by Newton iteration. `f` is
//! strictly increasing and convex, so any start to the right of the root
//! converges monotonically; the kernels always start there, which makes the
//! iteration count grow with the distance of the starting guess.

use crate::num::Real;

pub const MAX_ITERS: u32 = 100;
const EXP_RATE: f64 = 0.05;
const LINEAR_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solve<T> {
    pub root: T,
    pub iters: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("target {0} is not positive")]
    NonPositiveTarget(f64),
    #[error("tolerance {0} is not positive")]
    NonPositiveTolerance(f64),
    #[error("no convergence after {iters} iterations (last residual {residual:e})")]
    NoConvergence { iters: u32, residual: f64 },
}

#[inline]
pub fn residual_fn<T: Real>(t: T, exp: fn(T) -> T) -> T {
    exp(T::lit(EXP_RATE) * t) + T::lit(LINEAR_RATE) * t
}

/// Newton solve of `exp(0.05 T) + 0.01 T = y` starting at `guess`, using the
/// supplied exponential. Returns the root and the number of Newton updates.
pub fn ientropy_solve_with<T: Real>(
    y: T,
    guess: T,
    tol: T,
    exp: fn(T) -> T,
) -> Result<Solve<T>, SolveError> {
    if !(y > T::zero()) {
        return Err(SolveError::NonPositiveTarget(y.to_f64().unwrap_or(f64::NAN)));
    }
    if !(tol > T::zero()) {
        return Err(SolveError::NonPositiveTolerance(
            tol.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let rate = T::lit(EXP_RATE);
    let lin = T::lit(LINEAR_RATE);
    let mut t = guess;
    let mut iters = 0;
    loop {
        let e = exp(rate * t);
        let r = e + lin * t - y;
        if r.abs() <= tol {
            return Ok(Solve { root: t, iters });
        }
        if iters == MAX_ITERS || !r.is_finite() {
            return Err(SolveError::NoConvergence {
                iters,
                residual: r.to_f64().unwrap_or(f64::NAN),
            });
        }
        t = t - r / (rate * e + lin);
        iters += 1;
    }
}

/// [`ientropy_solve_with`] using the standard library exponential.
pub fn ientropy_solve<T: Real>(y: T, guess: T, tol: T) -> Result<Solve<T>, SolveError> {
    ientropy_solve_with(y, guess, tol, T::exp)
}

/// Starting point at or right of the root for targets `y >= 1`:
/// `f(20 ln y) = y + 0.2 ln y >= y`, plus a displacement that grows with
/// the column instability.
#[inline]
pub fn displaced_guess<T: Real>(y: T, instability: T) -> T {
    T::lit(20.0) * y.ln() + T::one() + T::lit(60.0) * instability
}
