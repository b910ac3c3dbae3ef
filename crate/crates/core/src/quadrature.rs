//! Gauss–Hermite rules and orthonormal Hermite functions.
//!
//! The rules are stored with *compensated* weights `ŵ_i = w_i·exp(t_i²)`, so
//! `Σ ŵ_i f(t_i) ≈ ∫ f(t) dt` for functions with Gaussian decay. The
//! compensated weight is computed directly as `1 / (m·h_{m-1}(t_i)²)` from the
//! normalized Hermite function, which never overflows.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 1024;

/// Orthonormal Hermite functions `h_0(t) … h_nmax(t)` with `∫ h_n² dt = 1`.
///
/// Upward three-term recursion on the function level; a running log scale
/// keeps the iterates in range for large `|t|`.
pub fn hermite_functions(nmax: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    let mut log_scale = -0.5 * t * t - 0.25 * PI.ln();
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    out.push(descale(cur, log_scale));
    for n in 0..nmax {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * t * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > 1e200 {
            prev *= 1e-200;
            cur *= 1e-200;
            log_scale += 200.0 * std::f64::consts::LN_10;
        }
        out.push(descale(cur, log_scale));
    }
    out
}

/// Single orthonormal Hermite function `h_n(t)`.
pub fn hermite_function(n: usize, t: f64) -> f64 {
    *hermite_functions(n, t).last().expect("non-empty")
}

#[inline]
fn descale(v: f64, log_scale: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    v.signum() * (v.abs().ln() + log_scale).exp()
}

/// Gauss–Hermite rule for the weight `exp(-t²)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    comp_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_NODES {
            return Err(Error::InvalidParameter(format!(
                "Gauss-Hermite size must be in 1..={MAX_NODES}, got {m}"
            )));
        }
        // Golub–Welsch start, then Newton on h_m(t) = 0
        let jacobi = DMatrix::from_fn(m, m, |i, j| {
            if i + 1 == j {
                ((j as f64) / 2.0).sqrt()
            } else if j + 1 == i {
                ((i as f64) / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
        let mf = m as f64;
        for t in nodes.iter_mut() {
            for _ in 0..3 {
                let h = hermite_functions(m, *t);
                let step = h[m] / ((2.0 * mf).sqrt() * h[m - 1]);
                if !step.is_finite() {
                    break;
                }
                *t -= step;
                if step.abs() < 1e-16 * t.abs().max(1.0) {
                    break;
                }
            }
        }
        for i in 0..m / 2 {
            let t = 0.5 * (nodes[m - 1 - i] - nodes[i]);
            nodes[i] = -t;
            nodes[m - 1 - i] = t;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        let comp_weights = nodes
            .iter()
            .map(|&t| {
                let h = hermite_function(m - 1, t);
                1.0 / (mf * h * h)
            })
            .collect();
        Ok(Self { nodes, comp_weights })
    }

    /// Shared, lazily built rule of size `m`.
    pub fn cached(m: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("cache poisoned").get(&m) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(m)?);
        cache.lock().expect("cache poisoned").insert(m, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights with `exp(t²)` folded in.
    pub fn compensated_weights(&self) -> &[f64] {
        &self.comp_weights
    }

    /// Classical weights for `∫ exp(-t²) f(t) dt`.
    pub fn weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.comp_weights)
            .map(|(t, w)| w * (-t * t).exp())
            .collect()
    }
}

/// Gauss–Hermite nodes stretched to `x_i = center + scale·t_i`, with the
/// compensated weights carrying the Jacobian: `Σ w̃_i f(x_i) ≈ ∫ f(x) dx`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

impl QuadratureGrid {
    pub fn new(m: usize, center: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && center.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid scale must be positive and finite, got {scale} (center {center})"
            )));
        }
        let rule = GaussHermite::cached(m)?;
        let nodes = rule.nodes().iter().map(|t| center + scale * t).collect();
        let weights = rule.compensated_weights().iter().map(|w| w * scale).collect();
        Ok(Self { nodes, weights, center, scale })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
