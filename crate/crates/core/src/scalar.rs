use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar used by the scoring kernels: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static {
    /// Lossy conversion from a count. Counts in this crate are small enough
    /// that `f64` represents them exactly.
    fn from_count<N: num_traits::ToPrimitive>(n: N) -> Self {
        <Self as NumCast>::from(n).unwrap_or_else(Self::infinity)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
