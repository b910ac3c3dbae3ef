//! Nyström discretization on Gauss–Hermite nodes: `B_ij = √w̃_i ρ(x_i,x_j) √w̃_j`.
//!
//! For GaussPoly kernels the nodes are placed at `x = t/r − s`, the natural
//! variable of the Gaussian eigenfunctions, so the rule integrates products
//! `φ_m φ_n` exactly and the discrete spectrum converges super-geometrically.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::dd::DoubleDouble;
use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, KernelSpec};
use crate::newton::{MomentSource, MomentVector};
use crate::quadrature::{QuadratureGrid, MAX_NODES};
use crate::spectrum::derive_spectrum;

pub const MIN_GRID: usize = 8;
pub const AUTO_GRID_MIN: usize = 48;
pub const AUTO_GRID_MAX: usize = 400;
/// Symmetrization defects above this abort the discretization.
pub const MAX_HERMITIAN_DEFECT: f64 = 1e-8;

/// Grid size from the spectral decay |ε|: enough nodes to resolve eigenvalues
/// down to ~1e-13 with a fixed margin.
pub fn auto_grid_size(spec: &KernelSpec) -> usize {
    match spec.gauss_poly_parts() {
        Some((g, _, _)) => {
            let e = derive_spectrum(&g).eps.abs();
            if e < 1e-3 {
                return AUTO_GRID_MIN;
            }
            let n = (1e-13f64.ln() / e.ln()).ceil() + 24.0;
            (n as usize).clamp(AUTO_GRID_MIN, AUTO_GRID_MAX)
        }
        None => 160,
    }
}

/// Center and affine stretch of the nodes.
pub fn auto_placement(spec: &KernelSpec) -> (f64, f64) {
    match spec.gauss_poly_parts() {
        Some((g, _, _)) => {
            let sp = derive_spectrum(&g);
            (-sp.s, 1.0 / sp.r)
        }
        None => spec.envelope(),
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    matrix: DMatrix<Complex64>,
    grid: QuadratureGrid,
    spec: KernelSpec,
    is_real: bool,
    clipped: usize,
    defect: f64,
}

impl DiscretizedOperator {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.nodes.len()
    }

    /// Nodes whose kernel value could not be evaluated and was set to 0.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    /// max |B − B†| before symmetrization.
    pub fn hermitian_defect(&self) -> f64 {
        self.defect
    }

    pub fn trace(&self) -> f64 {
        (0..self.size()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
}

/// Discretizes `spec` on `m` nodes. `m` and `scale` default to the automatic
/// choices when `None`.
pub fn discretize(spec: &KernelSpec, m: Option<usize>, scale: Option<f64>) -> Result<DiscretizedOperator> {
    let m = m.unwrap_or_else(|| auto_grid_size(spec));
    if !(MIN_GRID..=MAX_NODES).contains(&m) {
        return Err(Error::InvalidParameter(format!("grid size {m} outside [{MIN_GRID}, {MAX_NODES}]")));
    }
    let (center, auto_scale) = auto_placement(spec);
    let scale = scale.unwrap_or(auto_scale);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid scale must be positive, got {scale}")));
    }
    let grid = QuadratureGrid::new(m, center, scale)?;
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut b = DMatrix::<Complex64>::zeros(m, m);
    let mut clipped = 0;
    for j in 0..m {
        for i in 0..m {
            b[(i, j)] = match eval_kernel(spec, grid.nodes[i], grid.nodes[j]) {
                Ok(v) => v * (sw[i] * sw[j]),
                Err(_) => {
                    clipped += 1;
                    Complex64::new(0.0, 0.0)
                }
            };
        }
    }
    let bmax = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut defect = 0.0_f64;
    for j in 0..m {
        for i in 0..=j {
            let (u, l) = (b[(i, j)], b[(j, i)]);
            defect = defect.max((u - l.conj()).norm());
            let avg = (u + l.conj()) * 0.5;
            b[(i, j)] = avg;
            b[(j, i)] = avg.conj();
        }
    }
    if defect > MAX_HERMITIAN_DEFECT * bmax.max(1.0) {
        return Err(Error::NonHermitianKernel { defect });
    }
    let is_real = b.iter().all(|z| z.im == 0.0);
    Ok(DiscretizedOperator { matrix: b, grid, spec: spec.clone(), is_real, clipped, defect })
}

/// All eigenvalues of B, descending.
pub fn oracle_eigenvalues(op: &DiscretizedOperator) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = if op.is_real {
        let re = op.matrix.map(|z| z.re);
        SymmetricEigen::try_new(re, f64::EPSILON, 0)
            .ok_or_else(|| Error::EigenSolve(format!("real solve did not converge (m = {})", op.size())))?
            .eigenvalues
            .iter()
            .copied()
            .collect()
    } else {
        SymmetricEigen::try_new(op.matrix.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::EigenSolve(format!("Hermitian solve did not converge (m = {})", op.size())))?
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolve(format!("non-finite eigenvalue (m = {})", op.size())));
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

fn power_sums(ev: &[f64], k_max: usize) -> Vec<DoubleDouble> {
    let mut out = vec![DoubleDouble::ZERO; k_max];
    for &l in ev {
        let l = DoubleDouble::from_f64(l);
        let mut p = DoubleDouble::ONE;
        for v in out.iter_mut() {
            p *= l;
            *v += p;
        }
    }
    out
}

/// Refined grid used for the error estimate.
pub fn refinement_size(m: usize) -> usize {
    (m + (m / 4).max(16)).min(MAX_NODES)
}

/// Nyström moments and their ‖B‖ / trace-norm data.
#[derive(Debug, Clone)]
pub struct NystromMoments {
    pub moments: MomentVector,
    pub eigenvalues: Vec<f64>,
    /// Σ|μ_i|, the discrete trace norm.
    pub trace_norm: f64,
    pub refined_grid: usize,
}

/// M_k = Σ μ_iᵏ. The error combines the change under grid refinement with a
/// rounding floor from the eigensolve.
pub fn moments_nystrom(op: &DiscretizedOperator, k_max: usize) -> Result<NystromMoments> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let ev = oracle_eigenvalues(op)?;
    let vals = power_sums(&ev, k_max);
    let m = op.size();
    let m2 = refinement_size(m);
    let fine = if m2 > m {
        let op2 = discretize(&op.spec, Some(m2), Some(op.grid.scale))?;
        Some(power_sums(&oracle_eigenvalues(&op2)?, k_max))
    } else {
        None
    };
    let s1: f64 = ev.iter().map(|v| v.abs()).sum();
    let norm = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let errors = (1..=k_max)
        .map(|k| {
            let delta = fine.as_ref().map_or(0.0, |f| (f[k - 1] - vals[k - 1]).abs().to_f64());
            let floor = 8.0 * k as f64 * m as f64 * f64::EPSILON * s1 * norm.powi(k as i32 - 1);
            delta + floor
        })
        .collect();
    Ok(NystromMoments {
        moments: MomentVector::new(vals, errors, MomentSource::Nystrom { grid: m }),
        eigenvalues: ev,
        trace_norm: s1,
        refined_grid: m2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{GaussianParams, PolyCoeffs};
    use crate::spectrum::gaussian_moment;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_eigenvalues() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let op = discretize(&KernelSpec::gaussian(g), Some(64), None).unwrap();
        let ev = oracle_eigenvalues(&op).unwrap();
        let sp = derive_spectrum(&g);
        for n in 0..10 {
            assert!((ev[n] - sp.eigenvalue(n)).abs() < 1e-8, "n={n}");
        }
        assert!((op.trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_moments_m96() {
        let g = GaussianParams::new(4.0, 0.3, 1.0, -0.2, 0.5).unwrap();
        let op = discretize(&KernelSpec::gaussian(g), Some(96), None).unwrap();
        let nm = moments_nystrom(&op, 12).unwrap();
        let sp = derive_spectrum(&g);
        for k in 1..=12 {
            assert!((nm.moments.value(k) - gaussian_moment(&sp, k).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn negative_gaussian_eigenvalue() {
        let g = GaussianParams::real(1.0, 4.0).unwrap();
        let ev = oracle_eigenvalues(&discretize(&KernelSpec::gaussian(g), None, None).unwrap()).unwrap();
        assert_relative_eq!(*ev.last().unwrap(), -4.0 / 9.0, max_relative = 1e-8);
    }

    #[test]
    fn four_xy_plus_one_is_positive() {
        for sc in [0.25, 0.5, 1.0] {
            let g = GaussianParams::real(1.0, sc * sc).unwrap();
            let spec = KernelSpec::gauss_poly(g, PolyCoeffs::four_xy_plus(1.0), true).unwrap();
            let ev = oracle_eigenvalues(&discretize(&spec, None, None).unwrap()).unwrap();
            assert!(*ev.last().unwrap() >= -1e-9, "√C={sc}: {}", ev.last().unwrap());
        }
    }

    #[test]
    fn negative_gamma0_is_not_positive() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let spec = KernelSpec::gauss_poly(g, PolyCoeffs::four_xy_plus(-0.1), false).unwrap();
        let ev = oracle_eigenvalues(&discretize(&spec, None, None).unwrap()).unwrap();
        assert!(*ev.last().unwrap() < -1e-6);
    }

    #[test]
    fn convex_combination_is_positive() {
        let g1 = GaussianParams::new(3.0, 0.2, 1.0, 0.1, 0.4).unwrap();
        let g2 = GaussianParams::new(2.0, -0.5, 0.5, 0.3, -0.2).unwrap();
        let spec = KernelSpec::generic(move |x, y| g1.eval(x, y) * 0.3 + g2.eval(x, y) * 0.7, 0.6).unwrap();
        let op = discretize(&spec, Some(200), None).unwrap();
        let ev = oracle_eigenvalues(&op).unwrap();
        assert!(*ev.last().unwrap() >= -1e-9);
        assert!((op.trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eigensolve_self_consistent() {
        let g = GaussianParams::new(1.5, 0.1, 1.0, 0.0, 0.2).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, beta2: 0.2, gamma2: 0.5, alpha1: 0.1, beta1: 0.3, gamma0: 1.0 };
        let op = discretize(&KernelSpec::gauss_poly(g, p, true).unwrap(), None, None).unwrap();
        let ev = oracle_eigenvalues(&op).unwrap();
        let fro: f64 = op.matrix().iter().map(|z| z.norm_sqr()).sum();
        assert!((ev.iter().sum::<f64>() - op.trace()).abs() < 1e-12);
        assert!((ev.iter().map(|v| v * v).sum::<f64>() - fro).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let spec = KernelSpec::generic(|x, y| Complex64::new((-(x * x) - 2.0 * y * y).exp() * (1.0 + x), 0.0), 1.0).unwrap();
        assert!(matches!(discretize(&spec, Some(32), None), Err(Error::NonHermitianKernel { .. })));
    }

    #[test]
    fn bad_grid_rejected() {
        let g = GaussianParams::real(1.0, 1.0).unwrap();
        assert!(discretize(&KernelSpec::gaussian(g), Some(4), None).is_err());
    }
}
