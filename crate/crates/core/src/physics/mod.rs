//! Deterministic convection proxy kernels.
//!
//! Kernels are pure functions of a [`ColumnState`]: they hold no mutable
//! state and can be shared freely between threads.

mod column;
pub mod deep;
pub mod ientropy;
pub mod shallow;
mod variant;

pub use column::{
    into_chunks, reference_temperature, splitmix_draw, splitmix_unit, Chunk, ColumnOutput,
    ColumnState, GridSpec, DEFAULT_LEVELS, DEFAULT_MODEL_CHUNK_SIZE,
};
pub use deep::DeepConvection;
pub use ientropy::{ientropy_solve, ientropy_solve_with, Solve, SolveError};
pub use shallow::ShallowConvection;
pub use variant::KernelVariant;

use crate::num::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("column {col_id}: {reason}")]
    InvalidColumn { col_id: usize, reason: String },
    #[error("chunk {chunk_id}: expected {expected} levels, found a column with {found}")]
    MixedLevels {
        chunk_id: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Numeric failure inside a kernel, located to a column and level.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kernel} convection failed at column {col_id}{}: {source}", level.map(|l| format!(", level {l}")).unwrap_or_default())]
pub struct KernelError {
    pub kernel: &'static str,
    pub col_id: usize,
    pub level: Option<usize>,
    #[source]
    pub source: SolveError,
}

/// A per-column physics routine.
pub trait ColumnKernel<T: Real>: Sync {
    fn name(&self) -> &'static str;

    fn column(&self, column: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError>;

    /// Sequential reference execution over a chunk, in column order.
    fn run_chunk(&self, chunk: &Chunk<T>) -> Result<Vec<ColumnOutput<T>>, KernelError> {
        chunk.columns().iter().map(|c| self.column(c)).collect()
    }
}

impl<T: Real, K: ColumnKernel<T> + ?Sized> ColumnKernel<T> for &K {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn column(&self, column: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError> {
        (**self).column(column)
    }
}

/// Deep followed by shallow convection, tendencies summed per level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvectionSuite {
    pub deep: DeepConvection,
    pub shallow: ShallowConvection,
}

impl ConvectionSuite {
    pub fn new(threshold: f64, variant: KernelVariant) -> Self {
        Self {
            deep: DeepConvection::new(threshold, variant),
            shallow: ShallowConvection::new(variant),
        }
    }
}

impl<T: Real> ColumnKernel<T> for ConvectionSuite {
    fn name(&self) -> &'static str {
        "convection"
    }

    fn column(&self, column: &ColumnState<T>) -> Result<ColumnOutput<T>, KernelError> {
        let deep = self.deep.column(column)?;
        let shallow = self.shallow.column(column)?;
        Ok(deep.combine(&shallow))
    }
}

pub fn deep_convection<T: Real>(
    chunk: &Chunk<T>,
    threshold: f64,
    variant: KernelVariant,
) -> Result<Vec<ColumnOutput<T>>, KernelError> {
    DeepConvection::new(threshold, variant).run_chunk(chunk)
}

pub fn shallow_convection<T: Real>(
    chunk: &Chunk<T>,
    variant: KernelVariant,
) -> Result<Vec<ColumnOutput<T>>, KernelError> {
    ShallowConvection::new(variant).run_chunk(chunk)
}

/// Outcome of comparing two kernel variants on the same grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantComparison {
    pub within_tolerance: bool,
    pub bitwise_equal: bool,
    pub max_rel_deviation: f64,
}

fn rel_dev<T: Real>(a: T, b: T) -> f64 {
    let (a, b) = (a.to_f64().unwrap_or(f64::NAN), b.to_f64().unwrap_or(f64::NAN));
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Runs the deep and shallow kernels in both variants over `grid` and
/// compares every output value.
pub fn kernel_variant_outputs_equal<T: Real>(
    grid: &GridSpec,
    reference: KernelVariant,
    candidate: KernelVariant,
    rel_tol: f64,
) -> Result<VariantComparison, PhysicsError> {
    let columns = grid.generate::<T>()?;
    let chunk = Chunk::new(0, columns)?;
    let mut max_dev = 0.0f64;
    let mut bitwise = true;
    for (a, b) in [
        (
            deep_convection(&chunk, grid.activity_threshold, reference)?,
            deep_convection(&chunk, grid.activity_threshold, candidate)?,
        ),
        (
            shallow_convection(&chunk, reference)?,
            shallow_convection(&chunk, candidate)?,
        ),
    ] {
        for (x, y) in a.iter().zip(&b) {
            let pairs = std::iter::once((x.precip, y.precip))
                .chain(x.tend_t.iter().copied().zip(y.tend_t.iter().copied()))
                .chain(x.tend_q.iter().copied().zip(y.tend_q.iter().copied()));
            for (p, q) in pairs {
                bitwise &= p.to_raw() == q.to_raw();
                max_dev = max_dev.max(rel_dev(p, q));
            }
            bitwise &= x.exited_early == y.exited_early;
        }
    }
    Ok(VariantComparison {
        within_tolerance: max_dev <= rel_tol,
        bitwise_equal: bitwise,
        max_rel_deviation: max_dev,
    })
}
