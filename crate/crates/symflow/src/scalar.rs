//! Scalar abstraction: the whole crate is generic over the floating-point
//! type through [`Scalar`]; `f64` is the default used by the CLI.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the solvers and monitors are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal constant; panics only on NaN-producing conversions,
    /// which cannot happen for the finite literals used in this crate.
    #[inline]
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Converts a count (dimension, epoch, number of terms).
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize count must convert")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
