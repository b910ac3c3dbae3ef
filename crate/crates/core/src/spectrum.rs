//! Closed-form eigensystem of the Gaussian kernel ρ_G.
//!
//! λ_n = ε₀·εⁿ with ε₀ = 2√C/(√A+√C), ε = (√A-√C)/(√A+√C); the eigenfunctions
//! are Hermite functions in u = r(x+s), r = 2(AC)^¼, s = E/4C, carrying the
//! phase exp(-iBx² - iDx).

use num_complex::Complex64;

use crate::dd::DoubleDouble;
use crate::error::{Error, Result};
use crate::kernel::GaussianParams;
use crate::quadrature::hermite_functions;

/// Eigenfunction indices above this are rejected.
pub const STABILITY_HORIZON: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussSpectrum {
    pub eps0: f64,
    pub eps: f64,
    pub r: f64,
    pub s: f64,
}

impl GaussSpectrum {
    /// λ_n, with 0⁰ = 1 so that A = C gives the pure state λ₀ = 1.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        self.eps0 * self.eps.powi(n as i32)
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        (0..count).map(|n| self.eigenvalue(n)).collect()
    }

    /// Σ|λ_n| = ε₀/(1-|ε|).
    pub fn trace_norm(&self) -> f64 {
        self.eps0 / (1.0 - self.eps.abs())
    }

    pub fn is_positive(&self) -> bool {
        self.eps >= 0.0
    }
}

pub fn derive_spectrum(g: &GaussianParams) -> GaussSpectrum {
    let (sa, sc) = (g.a().sqrt(), g.c().sqrt());
    GaussSpectrum {
        eps0: 2.0 * sc / (sa + sc),
        eps: (sa - sc) / (sa + sc),
        r: 2.0 * (g.a() * g.c()).powf(0.25),
        s: g.e() / (4.0 * g.c()),
    }
}

/// The same constants carried in double-double, for the extended-precision
/// band route.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussSpectrumDD {
    pub eps0: DoubleDouble,
    pub eps: DoubleDouble,
    pub r: DoubleDouble,
    pub s: DoubleDouble,
}

pub(crate) fn derive_spectrum_dd(g: &GaussianParams) -> GaussSpectrumDD {
    let a = DoubleDouble::from_f64(g.a());
    let c = DoubleDouble::from_f64(g.c());
    let (sa, sc) = (a.sqrt(), c.sqrt());
    let sum = sa + sc;
    GaussSpectrumDD {
        eps0: (sc + sc) / sum,
        eps: (sa - sc) / sum,
        r: (a * c).sqrt().sqrt().mul_f64(2.0),
        s: DoubleDouble::from_f64(g.e()) / c.mul_f64(4.0),
    }
}

/// M_k = ε₀ᵏ/(1-εᵏ).
pub fn gaussian_moment(spec: &GaussSpectrum, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("moment order must be >= 1".into()));
    }
    Ok(spec.eps0.powi(k as i32) / (1.0 - spec.eps.powi(k as i32)))
}

#[cfg(test)]
pub(crate) fn gaussian_moment_dd(spec: &GaussSpectrumDD, k: usize) -> DoubleDouble {
    spec.eps0.powi(k as u32) / (DoubleDouble::ONE - spec.eps.powi(k as u32))
}

/// φ_n(x) = √r·h_n(r(x+s))·exp(-iBx² - iDx).
pub fn eigenfunction(spec: &GaussSpectrum, g: &GaussianParams, n: usize, x: f64) -> Result<Complex64> {
    Ok(eigenfunctions(spec, g, n, x)?[n])
}

/// φ_0(x) … φ_nmax(x) in one recursion.
pub fn eigenfunctions(spec: &GaussSpectrum, g: &GaussianParams, nmax: usize, x: f64) -> Result<Vec<Complex64>> {
    if nmax > STABILITY_HORIZON {
        return Err(Error::StabilityHorizon { n: nmax, horizon: STABILITY_HORIZON });
    }
    let u = spec.r * (x + spec.s);
    let phase = Complex64::from_polar(spec.r.sqrt(), -(g.b() * x * x + g.d() * x));
    Ok(hermite_functions(nmax, u).into_iter().map(|h| phase * h).collect())
}
