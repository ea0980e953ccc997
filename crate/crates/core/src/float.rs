//! Scalar abstraction for the numeric core.
//!
//! Geometry, depth codecs, losses, and the IoU kernels are generic over
//! [`Real`] so they run in `f32` or `f64`. The dataset, evaluation, and
//! synthesis layers use the `f64` aliases exported from the crate root.

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + core::fmt::Debug
    + core::fmt::Display
    + core::iter::Sum
    + Default
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn cst<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 constant converts to any Real")
}
