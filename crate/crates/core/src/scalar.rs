//! Scalar abstraction used by every numerical routine in this crate.
//!
//! All linear algebra and functional evaluations are generic over [`Real`],
//! which is satisfied by `f32` and `f64`. The crate root exposes `f64`
//! aliases for callers that do not care about the scalar type.
//!
//! The trait is built on `nalgebra::RealField` (which transitively supplies
//! the `num_traits` arithmetic and conversion traits) rather than on
//! `num_traits::Float` directly: bounding both would make method calls such
//! as `x.ln()` ambiguous inside generic code.

/// Floating-point scalar: `f32` or `f64`.
///
/// Semantics of a few operations assume IEEE behaviour of the concrete
/// type, e.g. [`crate::functionals::relative_entropy`] signals an infinite
/// divergence through the type's own infinity.
pub trait Real: nalgebra::RealField + Copy + num_traits::FromPrimitive {}

impl<T> Real for T where T: nalgebra::RealField + Copy + num_traits::FromPrimitive {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a working-scalar value back to `f64` (for reports and errors).
#[inline]
pub fn as_f64<T: Real>(x: T) -> f64 {
    nalgebra::try_convert(x).unwrap_or(f64::NAN)
}
