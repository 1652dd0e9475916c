use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::physics::PhysicsError;

pub const DEFAULT_LEVELS: usize = 30;
pub const DEFAULT_MODEL_CHUNK_SIZE: usize = 16;

/// Reference temperature profile the generator perturbs around and the
/// kernels measure anomalies against: 300 at the surface, 240 at the top.
pub fn reference_temperature(level: usize, levels: usize) -> f64 {
    if levels <= 1 {
        return 300.0;
    }
    300.0 - 60.0 * level as f64 / (levels - 1) as f64
}

/// Thermodynamic state of one vertical column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnState<T> {
    col_id: usize,
    instability: T,
    temperature: Vec<T>,
    humidity: Vec<T>,
}

impl<T: Real> ColumnState<T> {
    pub fn new(
        col_id: usize,
        instability: T,
        temperature: Vec<T>,
        humidity: Vec<T>,
    ) -> Result<Self, PhysicsError> {
        if !(instability >= T::zero() && instability <= T::one()) {
            return Err(PhysicsError::InvalidColumn {
                col_id,
                reason: format!("instability {instability} outside [0, 1]"),
            });
        }
        if temperature.is_empty() {
            return Err(PhysicsError::InvalidColumn {
                col_id,
                reason: "column has no levels".into(),
            });
        }
        if temperature.len() != humidity.len() {
            return Err(PhysicsError::InvalidColumn {
                col_id,
                reason: format!(
                    "temperature has {} levels, humidity has {}",
                    temperature.len(),
                    humidity.len()
                ),
            });
        }
        Ok(Self {
            col_id,
            instability,
            temperature,
            humidity,
        })
    }

    pub fn col_id(&self) -> usize {
        self.col_id
    }

    pub fn instability(&self) -> T {
        self.instability
    }

    pub fn temperature(&self) -> &[T] {
        &self.temperature
    }

    pub fn humidity(&self) -> &[T] {
        &self.humidity
    }

    pub fn levels(&self) -> usize {
        self.temperature.len()
    }

    /// Same column with a different instability; used by work-monotonicity
    /// checks.
    pub fn with_instability(&self, instability: T) -> Result<Self, PhysicsError> {
        Self::new(
            self.col_id,
            instability,
            self.temperature.clone(),
            self.humidity.clone(),
        )
    }

    /// Same column with new prognostic fields.
    pub fn evolved(&self, temperature: Vec<T>, humidity: Vec<T>) -> Result<Self, PhysicsError> {
        Self::new(self.col_id, self.instability, temperature, humidity)
    }
}

/// A group of columns dispatched together by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<T> {
    chunk_id: usize,
    columns: Vec<ColumnState<T>>,
}

impl<T: Real> Chunk<T> {
    pub fn new(chunk_id: usize, columns: Vec<ColumnState<T>>) -> Result<Self, PhysicsError> {
        if let Some(first) = columns.first() {
            let levels = first.levels();
            if let Some(bad) = columns.iter().find(|c| c.levels() != levels) {
                return Err(PhysicsError::MixedLevels {
                    chunk_id,
                    expected: levels,
                    found: bad.levels(),
                });
            }
        }
        Ok(Self { chunk_id, columns })
    }

    pub fn chunk_id(&self) -> usize {
        self.chunk_id
    }

    pub fn columns(&self) -> &[ColumnState<T>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<ColumnState<T>> {
        self.columns
    }

    /// Number of columns in this chunk (the model chunk size, except for a
    /// short trailing chunk).
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.columns.first().map_or(0, ColumnState::levels)
    }
}

/// Splits columns into consecutive chunks of `model_chunk_size`.
pub fn into_chunks<T: Real>(
    columns: Vec<ColumnState<T>>,
    model_chunk_size: usize,
) -> Result<Vec<Chunk<T>>, PhysicsError> {
    if model_chunk_size == 0 {
        return Err(PhysicsError::InvalidGrid("model chunk size must be >= 1".into()));
    }
    let mut chunks = Vec::with_capacity(columns.len().div_ceil(model_chunk_size));
    let mut iter = columns.into_iter().peekable();
    while iter.peek().is_some() {
        let cols: Vec<_> = iter.by_ref().take(model_chunk_size).collect();
        chunks.push(Chunk::new(chunks.len(), cols)?);
    }
    Ok(chunks)
}

/// Result of running a convection kernel on one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOutput<T> {
    pub col_id: usize,
    pub precip: T,
    pub tend_t: Vec<T>,
    pub tend_q: Vec<T>,
    pub exited_early: bool,
    pub work_units: u64,
}

impl<T: Real> ColumnOutput<T> {
    pub fn zeroed(col_id: usize, levels: usize) -> Self {
        Self {
            col_id,
            precip: T::zero(),
            tend_t: vec![T::zero(); levels],
            tend_q: vec![T::zero(); levels],
            exited_early: false,
            work_units: 0,
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.precip == T::zero()
            && self.tend_t.iter().all(|v| *v == T::zero())
            && self.tend_q.iter().all(|v| *v == T::zero())
    }

    /// Level-wise sum of two outputs for the same column.
    pub fn combine(&self, other: &Self) -> Self {
        debug_assert_eq!(self.col_id, other.col_id);
        Self {
            col_id: self.col_id,
            precip: self.precip + other.precip,
            tend_t: self
                .tend_t
                .iter()
                .zip(&other.tend_t)
                .map(|(a, b)| *a + *b)
                .collect(),
            tend_q: self
                .tend_q
                .iter()
                .zip(&other.tend_q)
                .map(|(a, b)| *a + *b)
                .collect(),
            exited_early: self.exited_early || other.exited_early,
            work_units: self.work_units + other.work_units,
        }
    }
}

/// Counter-based generator: SplitMix64's finalizer applied to
/// `seed + (counter + 1) * golden_gamma`. Every draw is addressable by its
/// counter, so a grid can be regenerated column by column in any order.
pub fn splitmix_draw(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) with 53 random bits.
pub fn splitmix_unit(seed: u64, counter: u64) -> f64 {
    (splitmix_draw(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Grid layout and generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_columns: usize,
    pub levels: usize,
    /// Deep convection is skipped for columns with instability at or
    /// below this value.
    pub activity_threshold: f64,
    /// Fraction of columns, centred on the middle of the index range, that
    /// draw elevated instability.
    pub tropics_band: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_columns: 864,
            levels: DEFAULT_LEVELS,
            activity_threshold: 0.5,
            tropics_band: 0.3,
            seed: 42,
        }
    }
}

impl GridSpec {
    pub fn new(n_columns: usize, levels: usize, seed: u64) -> Self {
        Self {
            n_columns,
            levels,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.n_columns == 0 {
            return Err(PhysicsError::InvalidGrid("n_columns must be >= 1".into()));
        }
        if self.levels == 0 {
            return Err(PhysicsError::InvalidGrid("levels must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tropics_band) {
            return Err(PhysicsError::InvalidGrid(format!(
                "tropics_band {} outside [0, 1]",
                self.tropics_band
            )));
        }
        if !(0.0..=1.0).contains(&self.activity_threshold) {
            return Err(PhysicsError::InvalidGrid(format!(
                "activity_threshold {} outside [0, 1]",
                self.activity_threshold
            )));
        }
        Ok(())
    }

    pub fn in_tropics(&self, col: usize) -> bool {
        let centre = (col as f64 + 0.5) / self.n_columns as f64;
        (centre - 0.5).abs() < 0.5 * self.tropics_band
    }

    /// Generates the column set. Pure in the fields of `self`.
    pub fn generate<T: Real>(&self) -> Result<Vec<ColumnState<T>>, PhysicsError> {
        self.validate()?;
        let levels = self.levels;
        let draws_per_column = 2 + 2 * levels as u64;
        (0..self.n_columns)
            .map(|col| {
                let base = col as u64 * draws_per_column;
                let u = |slot: u64| splitmix_unit(self.seed, base + slot);
                let s = if self.in_tropics(col) {
                    0.5 + 0.5 * u(0)
                } else {
                    0.5 * u(0)
                };
                let offset = 4.0 * (u(1) - 0.5);
                let temperature = (0..levels)
                    .map(|k| {
                        let noise = u(2 + k as u64) - 0.5;
                        T::lit(reference_temperature(k, levels) + offset + noise)
                    })
                    .collect();
                let humidity = (0..levels)
                    .map(|k| {
                        let h = 1.0 - k as f64 / levels as f64;
                        let jitter = 0.5 + u(2 + (levels + k) as u64);
                        T::lit(0.02 * h * h * jitter)
                    })
                    .collect();
                ColumnState::new(col, T::lit(s), temperature, humidity)
            })
            .collect()
    }

    pub fn generate_chunks<T: Real>(
        &self,
        model_chunk_size: usize,
    ) -> Result<Vec<Chunk<T>>, PhysicsError> {
        into_chunks(self.generate()?, model_chunk_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_columns() {
        assert!(ColumnState::new(0, 1.5f64, vec![1.0], vec![0.0]).is_err());
        assert!(ColumnState::new(0, 0.5f64, vec![], vec![]).is_err());
        assert!(ColumnState::new(0, 0.5f64, vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(ColumnState::new(0, f64::NAN, vec![1.0], vec![0.0]).is_err());
        assert!(ColumnState::new(0, 1.0f64, vec![1.0], vec![0.0]).is_ok());
    }

    #[test]
    fn chunk_requires_uniform_levels() {
        let a = ColumnState::new(0, 0.1f64, vec![1.0; 3], vec![0.0; 3]).unwrap();
        let b = ColumnState::new(1, 0.1f64, vec![1.0; 4], vec![0.0; 4]).unwrap();
        assert!(matches!(
            Chunk::new(0, vec![a, b]),
            Err(PhysicsError::MixedLevels { .. })
        ));
    }

    #[test]
    fn chunking_keeps_order_and_short_tail() {
        let cols = GridSpec::new(50, 5, 1).generate::<f64>().unwrap();
        let chunks = into_chunks(cols.clone(), 16).unwrap();
        assert_eq!(
            chunks.iter().map(Chunk::len).collect::<Vec<_>>(),
            vec![16, 16, 16, 2]
        );
        let flat: Vec<_> = chunks.into_iter().flat_map(Chunk::into_columns).collect();
        assert_eq!(flat, cols);
        assert!(into_chunks(cols, 0).is_err());
    }

    #[test]
    fn generation_is_reproducible_bit_for_bit() {
        let g = GridSpec::new(128, 30, 7);
        let a: Vec<ColumnState<f64>> = g.generate().unwrap();
        let b: Vec<ColumnState<f64>> = g.generate().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instability().to_bits(), y.instability().to_bits());
            for (p, q) in x.temperature().iter().zip(y.temperature()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
        let other: Vec<ColumnState<f64>> = GridSpec::new(128, 30, 8).generate().unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn tropics_band_gets_elevated_instability() {
        let g = GridSpec {
            tropics_band: 0.25,
            ..GridSpec::new(400, 10, 3)
        };
        let cols: Vec<ColumnState<f64>> = g.generate().unwrap();
        let mut band = 0;
        for c in &cols {
            if g.in_tropics(c.col_id()) {
                band += 1;
                assert!(c.instability() >= 0.5);
            } else {
                assert!(c.instability() < 0.5);
            }
        }
        assert_eq!(band, 100);
    }

    #[test]
    fn splitmix_known_values() {
        // SplitMix64 seeded with 0: first outputs of the reference stream.
        assert_eq!(splitmix_draw(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix_draw(0, 1), 0x6E78_9E6A_A1B9_65F4);
    }
}
