//! Kernel configuration files (TOML).
//!
//! ```toml
//! hbar = 1.0          # optional, default 1
//! normalize = true    # optional, default true
//!
//! [gaussian]          # A and C required, B, D, E default to 0
//! A = 1.5
//! C = 1.0
//!
//! [poly]              # optional; missing keys are 0 except gamma0 (1)
//! alpha2 = -1.0
//! gamma2 = 0.5
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GaussianParams, KernelSpec, PolyCoeffs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D", default)]
    pub d: f64,
    #[serde(rename = "E", default)]
    pub e: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySection {
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub gamma2: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default = "one")]
    pub gamma0: f64,
}

impl Default for PolySection {
    fn default() -> Self {
        Self { alpha2: 0.0, beta2: 0.0, gamma2: 0.0, alpha1: 0.0, beta1: 0.0, gamma0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "yes")]
    pub normalize: bool,
    pub gaussian: GaussianSection,
    #[serde(default)]
    pub poly: PolySection,
}

impl KernelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn gaussian_params(&self) -> Result<GaussianParams> {
        let g = &self.gaussian;
        GaussianParams::new(g.a, g.b, g.c, g.d, g.e)
    }

    pub fn poly_coeffs(&self) -> PolyCoeffs {
        let p = &self.poly;
        PolyCoeffs { alpha2: p.alpha2, beta2: p.beta2, gamma2: p.gamma2, alpha1: p.alpha1, beta1: p.beta1, gamma0: p.gamma0 }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        KernelSpec::gauss_poly(self.gaussian_params()?, self.poly_coeffs(), self.normalize)?.with_hbar(self.hbar)
    }

    pub fn from_parts(g: &GaussianParams, p: &PolyCoeffs, normalize: bool, hbar: f64) -> Self {
        Self {
            hbar,
            normalize,
            gaussian: GaussianSection { a: g.a(), b: g.b(), c: g.c(), d: g.d(), e: g.e() },
            poly: PolySection { alpha2: p.alpha2, beta2: p.beta2, gamma2: p.gamma2, alpha1: p.alpha1, beta1: p.beta1, gamma0: p.gamma0 },
        }
    }
}
