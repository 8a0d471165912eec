//! Detectability bounds for rank-r spiked complex Gaussian tensors.
//!
//! The observation is an order-d tensor `Y` with `n` entries per mode, either
//! pure noise `Z` (i.i.d. circular complex Gaussian, variance `1/n`) or
//! `X₀ + Z` where `X₀ = Σᵢ λᵢ x⁽¹ⁱ⁾ ⊗ … ⊗ x⁽ᵈⁱ⁾` is a low-rank spike.
//!
//! The crate computes the second-moment non-detectability thresholds
//! ([`thresholds`]), the random bilinear functional `η` whose exponential
//! moment is the second moment of the likelihood ratio ([`eta`]), and
//! seeded Monte-Carlo estimators that check those quantities at desk scale
//! ([`moment`]).

pub mod error;
pub mod eta;
pub mod linalg;
pub mod mc;
pub mod moment;
pub mod rng;
pub mod spike;
pub mod tensor;
pub mod thresholds;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
