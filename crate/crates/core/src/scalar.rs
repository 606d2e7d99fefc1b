//! Floating-point abstraction shared by the numeric kernels.
//!
//! The FE solver, the surrogate network and the field statistics are all
//! written against [`Scalar`] so the same code runs in `f32` (fast training,
//! compact model files) and `f64` (oracle-grade FE solves, gradient checks).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Real scalar usable by every kernel in the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every constant in the crate goes through here.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Little-endian `f32` bytes, the on-disk representation of weights and fields.
    #[inline]
    fn to_f32_le(self) -> [u8; 4] {
        (self.as_f64() as f32).to_le_bytes()
    }

    #[inline]
    fn of_f32(x: f32) -> Self {
        Self::of(x as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_f32_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }

    #[inline]
    fn of_f32(x: f32) -> Self {
        x
    }
}

impl Scalar for f64 {}
