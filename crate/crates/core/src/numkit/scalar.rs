use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the whole crate is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every literal used in this crate is
    /// representable (possibly rounded) in both supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// `ln(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
    fn log_add(self, other: Self) -> Self {
        if self == Self::neg_infinity() {
            return other;
        }
        if other == Self::neg_infinity() {
            return self;
        }
        let (hi, lo) = if self > other { (self, other) } else { (other, self) };
        hi + (lo - hi).exp().ln_1p()
    }

    /// Parses the textual form written by [`Scalar::to_text`].
    fn parse_text(s: &str) -> Option<Self> {
        Self::from_str(s).ok()
    }

    /// Exact textual form: 17 significant decimal digits, round-trips bit
    /// for bit for both `f32` and `f64`.
    fn to_text(self) -> String {
        format!("{:.16e}", self)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Log-sum-exp over an iterator. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values
        .into_iter()
        .fold(T::neg_infinity(), |acc, v| acc.log_add(v))
}
