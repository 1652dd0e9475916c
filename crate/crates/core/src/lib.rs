//! Convection-column proxy mini-app and the harness used to tune it.
//!
//! Kernels and analyses are generic over the scalar type ([`num::Real`],
//! implemented for `f32` and `f64`); the aliases below fix it to `f64`.

pub mod bench;
pub mod hetero;
pub mod layout;
pub mod model;
pub mod num;
pub mod physics;
pub mod scheduler;
pub mod validate;

pub use num::Real;

pub type Column = physics::ColumnState<f64>;
pub type Output = physics::ColumnOutput<f64>;
pub type ColumnChunk = physics::Chunk<f64>;
pub type Field = layout::Field2D<f64>;

pub type Column32 = physics::ColumnState<f32>;
pub type Output32 = physics::ColumnOutput<f32>;
pub type ColumnChunk32 = physics::Chunk<f32>;
pub type Field32 = layout::Field2D<f32>;
