//! Stress-concentration fields on rough bore surfaces.
//!
//! Pixel-mesh finite elements compute per-pixel K_t on synthetic or imported
//! radial-axial slices; a convolutional encoder-decoder learns the same map;
//! exceedance curves and connected-cluster statistics of the stressed volume
//! feed a fatigue-life model.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual choices.

pub mod cluster;
pub mod error;
pub mod fem;
pub mod io;
pub mod life;
pub mod plot;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod surface;
pub mod surrogate;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// FE output field in double precision.
pub type KtField64 = fem::KtField<f64>;
/// Surrogate output field.
pub type KtField32 = fem::KtField<f32>;
pub type SparseSystem64 = fem::SparseSystem<f64>;
pub type Network32 = surrogate::Network<f32>;
pub type Network64 = surrogate::Network<f64>;
