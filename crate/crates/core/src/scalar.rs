//! Scalar abstraction shared by the geometric core.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable by every generator and estimator in the crate.
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Tolerance used when validating that inputs lie on the probability simplex
    /// (sum to one, log-normaliser zero).
    fn simplex_tolerance() -> Self;

    /// Lossy conversion from `f64` literals.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in a float")
    }
}

impl Scalar for f64 {
    fn simplex_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for f32 {
    fn simplex_tolerance() -> Self {
        1e-4
    }
}
