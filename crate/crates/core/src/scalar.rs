use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type used for entropy, gain and probability mass.
///
/// Implemented for `f32` and `f64`. Counts enter the math through
/// [`Scalar::from_count`], so the tree and dataset stay integer-valued.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance under which two gains are treated as equal when breaking ties.
    fn tie_epsilon() -> Self;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn tie_epsilon() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn tie_epsilon() -> Self {
        1e-12
    }
}
