//! Positivity testing for trace-class integral operators on L²(ℝ).
//!
//! Moments `M_k = Tr(ρ̂ᵏ)` come from either a banded Hermite-basis matrix (for
//! polynomial-times-Gaussian kernels) or a Nyström discretization; Newton's
//! identities turn them into elementary symmetric polynomials `e_k`, whose
//! signs decide positivity up to a finite depth.

pub mod band;
pub mod certify;
pub mod config;
pub mod dd;
pub mod error;
pub mod kernel;
pub mod newton;
pub mod nystrom;
pub mod quadrature;
pub mod spectrum;
pub mod sweep;
pub mod wigner;

pub use error::{Error, Result};
pub use kernel::{GaussianParams, KernelSpec, PolyCoeffs};
