//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// The thresholds below are relative to the largest magnitude in play and
/// are chosen per precision; the `f64` values are the documented defaults.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative threshold on `|r_jj| / max |r_kk|` below which a QR factor is
    /// declared rank deficient.
    fn rank_tolerance() -> Self;

    /// Relative off-diagonal tolerance for one-sided Jacobi rotations.
    fn jacobi_tolerance() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn rank_tolerance() -> Self {
        1e-12
    }
    fn jacobi_tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn rank_tolerance() -> Self {
        1e-5
    }
    fn jacobi_tolerance() -> Self {
        1e-6
    }
}
