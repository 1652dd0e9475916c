//! Two-dimensional (columns x levels) output fields with a choice of
//! orientation and inner-dimension padding, and the analyses used to
//! reason about cache-line sharing between threads.

mod bench;

use std::collections::HashMap;
use std::fmt;
use std::marker::PhantomData;
use std::mem::size_of;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::num::Real;

pub use bench::{write_loop_bench, written_value, WriteLoopResult, WriteMode, WRITE_LOOP_DISPATCH};

pub const DEFAULT_LINE_BYTES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Orientation {
    /// Levels contiguous per column: `A(levels + pad, cols)` in Fortran terms.
    #[default]
    #[serde(rename = "col-outer")]
    ColumnOuter,
    /// Columns contiguous per level: `A(cols, levels)` in Fortran terms.
    #[serde(rename = "level-outer")]
    LevelOuter,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::ColumnOuter => "col-outer",
            Orientation::LevelOuter => "level-outer",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "col-outer" | "column-outer" => Ok(Orientation::ColumnOuter),
            "level-outer" => Ok(Orientation::LevelOuter),
            _ => Err(format!("unknown layout `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("cache line size {0} is not a power of two")]
    LineNotPowerOfTwo(usize),
    #[error("assignment covers {got} columns, field has {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("fields have different shapes")]
    ShapeMismatch,
    #[error("thread count must be >= 1")]
    NoThreads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheSpec {
    line_bytes: usize,
}

impl Default for CacheSpec {
    fn default() -> Self {
        Self {
            line_bytes: DEFAULT_LINE_BYTES,
        }
    }
}

impl CacheSpec {
    pub fn new(line_bytes: usize) -> Result<Self, LayoutError> {
        if !line_bytes.is_power_of_two() {
            return Err(LayoutError::LineNotPowerOfTwo(line_bytes));
        }
        Ok(Self { line_bytes })
    }

    pub fn line_bytes(&self) -> usize {
        self.line_bytes
    }
}

/// Smallest `p >= 0` with `(n_levels + p) * elem_bytes` a multiple of
/// `line_bytes`.
pub fn compute_padding(n_levels: usize, elem_bytes: usize, line_bytes: usize) -> usize {
    let period = line_bytes / elem_bytes.gcd(&line_bytes);
    (period - n_levels % period) % period
}

/// Padding request for a layout: computed from the cache line, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PadChoice {
    #[default]
    Auto,
    Elems(usize),
}

impl PadChoice {
    pub fn resolve(self, inner_len: usize, elem_bytes: usize, cache: &CacheSpec) -> usize {
        match self {
            PadChoice::Auto => compute_padding(inner_len, elem_bytes, cache.line_bytes()),
            PadChoice::Elems(p) => p,
        }
    }
}

impl fmt::Display for PadChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PadChoice::Auto => f.write_str("auto"),
            PadChoice::Elems(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for PadChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(PadChoice::Auto);
        }
        s.parse()
            .map(PadChoice::Elems)
            .map_err(|_| format!("pad must be `auto` or an element count, got `{s}`"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PadRepr {
    Count(usize),
    Text(String),
}

impl Serialize for PadChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PadChoice::Auto => PadRepr::Text("auto".into()),
            PadChoice::Elems(p) => PadRepr::Count(*p),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PadChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PadRepr::deserialize(d)? {
            PadRepr::Count(p) => Ok(PadChoice::Elems(p)),
            PadRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Geometry of a field, independent of its storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldShape {
    pub n_cols: usize,
    pub n_levels: usize,
    pub orientation: Orientation,
    pub pad_elems: usize,
    pub elem_bytes: usize,
}

impl FieldShape {
    pub fn inner_len(&self) -> usize {
        match self.orientation {
            Orientation::ColumnOuter => self.n_levels,
            Orientation::LevelOuter => self.n_cols,
        }
    }

    pub fn outer_len(&self) -> usize {
        match self.orientation {
            Orientation::ColumnOuter => self.n_cols,
            Orientation::LevelOuter => self.n_levels,
        }
    }

    /// Elements between the starts of consecutive inner runs.
    pub fn row_stride(&self) -> usize {
        self.inner_len() + self.pad_elems
    }

    pub fn storage_len(&self) -> usize {
        self.row_stride() * self.outer_len()
    }

    #[inline]
    pub fn index(&self, col: usize, level: usize) -> usize {
        match self.orientation {
            Orientation::ColumnOuter => col * self.row_stride() + level,
            Orientation::LevelOuter => level * self.row_stride() + col,
        }
    }

    pub fn is_padding(&self, idx: usize) -> bool {
        idx % self.row_stride() >= self.inner_len()
    }
}

/// Line-aligned, zero-initialised 2D field.
#[derive(Debug, Clone)]
pub struct Field2D<T> {
    shape: FieldShape,
    buf: Vec<T>,
    base: usize,
}

impl<T: Real> Field2D<T> {
    pub fn new(
        n_cols: usize,
        n_levels: usize,
        orientation: Orientation,
        pad_elems: usize,
        cache: &CacheSpec,
    ) -> Self {
        let shape = FieldShape {
            n_cols,
            n_levels,
            orientation,
            pad_elems,
            elem_bytes: size_of::<T>(),
        };
        let slack = cache.line_bytes().div_ceil(size_of::<T>());
        let buf = vec![T::zero(); shape.storage_len() + slack];
        let addr = buf.as_ptr() as usize;
        let line = cache.line_bytes();
        let base = ((line - addr % line) % line) / size_of::<T>();
        Self { shape, buf, base }
    }

    /// Field whose padding is chosen by `pad` for the inner dimension.
    pub fn with_pad(
        n_cols: usize,
        n_levels: usize,
        orientation: Orientation,
        pad: PadChoice,
        cache: &CacheSpec,
    ) -> Self {
        let inner = match orientation {
            Orientation::ColumnOuter => n_levels,
            Orientation::LevelOuter => n_cols,
        };
        let pad_elems = pad.resolve(inner, size_of::<T>(), cache);
        Self::new(n_cols, n_levels, orientation, pad_elems, cache)
    }

    pub fn shape(&self) -> FieldShape {
        self.shape
    }

    pub fn storage(&self) -> &[T] {
        &self.buf[self.base..self.base + self.shape.storage_len()]
    }

    pub fn base_addr(&self) -> usize {
        self.storage().as_ptr() as usize
    }

    #[inline]
    pub fn get(&self, col: usize, level: usize) -> T {
        assert!(col < self.shape.n_cols && level < self.shape.n_levels);
        self.buf[self.base + self.shape.index(col, level)]
    }

    #[inline]
    pub fn set(&mut self, col: usize, level: usize, value: T) {
        assert!(col < self.shape.n_cols && level < self.shape.n_levels);
        self.buf[self.base + self.shape.index(col, level)] = value;
    }

    pub fn padding_is_zero(&self) -> bool {
        self.storage()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.shape.is_padding(*i))
            .all(|(_, v)| v.to_raw() == T::zero().to_raw())
    }

    /// Bitwise equality of the logical cells; padding is ignored.
    pub fn logical_eq(&self, other: &Self) -> bool {
        if self.shape.n_cols != other.shape.n_cols || self.shape.n_levels != other.shape.n_levels
        {
            return false;
        }
        (0..self.shape.n_cols).all(|i| {
            (0..self.shape.n_levels).all(|k| self.get(i, k).to_raw() == other.get(i, k).to_raw())
        })
    }

    /// Shared writer for concurrent fills of disjoint column sets.
    pub fn writer(&mut self) -> FieldWriter<'_, T> {
        let base = self.base;
        FieldWriter {
            ptr: self.buf[base..].as_mut_ptr(),
            shape: self.shape,
            _field: PhantomData,
        }
    }
}

/// Raw-pointer view of a field that can be shared between threads.
pub struct FieldWriter<'a, T> {
    ptr: *mut T,
    shape: FieldShape,
    _field: PhantomData<&'a mut T>,
}

// Writers only hand out element writes; callers guarantee disjointness.
unsafe impl<T: Send> Send for FieldWriter<'_, T> {}
unsafe impl<T: Send> Sync for FieldWriter<'_, T> {}

impl<T: Real> FieldWriter<'_, T> {
    pub fn shape(&self) -> FieldShape {
        self.shape
    }

    /// Writes storage element `idx` (logical or padding).
    ///
    /// # Safety
    /// `idx < storage_len`, and no other thread may access element `idx`
    /// while the writer is alive.
    #[inline]
    pub unsafe fn write_raw(&self, idx: usize, value: T) {
        debug_assert!(idx < self.shape.storage_len());
        self.ptr.add(idx).write(value);
    }
}

/// Number of cache lines written by two or more threads when column `i`
/// is written by thread `assignment[i]`.
pub fn line_collision_count(
    shape: &FieldShape,
    assignment: &[usize],
    cache: &CacheSpec,
) -> Result<usize, LayoutError> {
    if assignment.len() != shape.n_cols {
        return Err(LayoutError::AssignmentLength {
            expected: shape.n_cols,
            got: assignment.len(),
        });
    }
    // line -> (first writer, shared)
    let mut lines: HashMap<usize, (usize, bool)> = HashMap::new();
    for (col, &thread) in assignment.iter().enumerate() {
        for level in 0..shape.n_levels {
            let line = shape.index(col, level) * shape.elem_bytes / cache.line_bytes();
            let entry = lines.entry(line).or_insert((thread, false));
            if entry.0 != thread {
                entry.1 = true;
            }
        }
    }
    Ok(lines.values().filter(|(_, shared)| *shared).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Traversal {
    /// For each column, walk its levels.
    PerColumnLevels,
    /// For each level, walk the columns.
    PerLevelColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrideProfile {
    /// Element stride between successive accesses of the inner loop; 1 is
    /// unit stride.
    pub inner: usize,
    /// Element stride between the first accesses of successive outer
    /// iterations.
    pub outer: usize,
}

pub fn stride_profile(shape: &FieldShape, traversal: Traversal) -> StrideProfile {
    let level_step = if shape.n_levels > 1 {
        shape.index(0, 1) - shape.index(0, 0)
    } else {
        0
    };
    let col_step = if shape.n_cols > 1 {
        shape.index(1, 0) - shape.index(0, 0)
    } else {
        0
    };
    match traversal {
        Traversal::PerColumnLevels => StrideProfile {
            inner: level_step,
            outer: col_step,
        },
        Traversal::PerLevelColumns => StrideProfile {
            inner: col_step,
            outer: level_step,
        },
    }
}
