//! Values in `(-inf, +inf]`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

/// A real number or `+inf`. Closed proper convex functions never take `-inf`,
/// so the lower end is not representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// The value as an `f64`, with `+inf` mapped to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn add_f64(self, rhs: f64) -> ExtReal {
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v + rhs),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(v)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v:.16e}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}
