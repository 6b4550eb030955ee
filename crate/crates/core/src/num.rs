//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! The optimizer, pricing and emissions engines only need field arithmetic and
//! a total order on finite values, so they are written against [`Scalar`]. Binary
//! floats are the production choice; [`Exact`] rationals let tests check
//! identities with zero rounding.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational scalar used by tests and verification code.
pub type Exact = Ratio<i128>;

const NANOS_PER_HOUR: i64 = 3_600_000_000_000;

pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Slack used when two objective values should be treated as a tie.
    fn tolerance() -> Self;

    /// False for NaN and infinities. Rationals are always finite.
    fn is_finite_value(self) -> bool;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| panic!("{v} is not representable"))
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits the scalar type")
    }

    /// Length of a nanosecond span in hours.
    fn hours_from_nanos(nanos: i64) -> Self {
        Self::from_i64(nanos).expect("nanosecond count fits")
            / Self::from_i64(NANOS_PER_HOUR).expect("constant fits")
    }

    /// Total order for sorting. Callers guarantee finiteness.
    fn total_cmp_value(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    fn max_value(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_value(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-12
    }

    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }

    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Exact {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }

    fn is_finite_value(self) -> bool {
        true
    }
}

/// Sum of an iterator of scalars, starting from zero.
pub fn sum<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    values.into_iter().fold(S::zero(), |acc, v| acc + v)
}

/// `a <= b` up to the scalar's tie slack, scaled by magnitude.
pub fn le_tol<S: Scalar>(a: S, b: S) -> bool {
    let scale = S::one().max_value(a.abs()).max_value(b.abs());
    a <= b + S::tolerance() * scale
}
