use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric core is generic over (`f32` or `f64`).
///
/// The gradient checker and the frozen expected values in the test suite
/// assume `f64` precision; `f32` is supported for inference-style use.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` constant; total for any float type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
