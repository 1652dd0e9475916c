use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::{poly_exp, Real};

/// Arithmetic variant a kernel is compiled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    /// Original arithmetic: chained divisions `b / c / c` and loop
    /// invariants recomputed per level.
    #[default]
    Naive,
    /// `b / (c * c)` and per-column invariants hoisted out of the level loops.
    StrengthReduced,
    /// Naive arithmetic with every exponential routed through
    /// [`poly_exp`].
    ApproxExp,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 3] = [
        KernelVariant::Naive,
        KernelVariant::StrengthReduced,
        KernelVariant::ApproxExp,
    ];

    pub fn exp_fn<T: Real>(self) -> fn(T) -> T {
        match self {
            KernelVariant::ApproxExp => poly_exp::<T>,
            _ => T::exp,
        }
    }

    pub fn strength_reduced(self) -> bool {
        matches!(self, KernelVariant::StrengthReduced)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelVariant::Naive => "naive",
            KernelVariant::StrengthReduced => "strength-reduced",
            KernelVariant::ApproxExp => "approx-exp",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown kernel variant `{s}`"))
    }
}
