//! Pentadiagonal matrix of a quadratic GaussPoly kernel in the eigenbasis of
//! its Gaussian factor, and moments from truncated traces of its powers.
//!
//! Entries are `⟨φ_m, ρ̂ φ_n⟩`:
//!
//! ```text
//! ρ_{n,n}   = εⁿ·ε₀·a₀ + n·εⁿ⁻¹·(ε·b₀)
//! ρ_{n,n+1} = √(n+1)·εⁿ·(a₁ + i·b₁)
//! ρ_{n,n+2} = √((n+1)(n+2))·εⁿ·(a₂ + i·b₂)
//! ```
//!
//! with the lower triangle given by Hermitian symmetry. Everything is carried
//! in double-double so that the elementary symmetric polynomials downstream
//! can be resolved well below f64 resolution.

use num_complex::Complex64;

use crate::dd::{ComplexDD, DoubleDouble, DD_EPS};
use crate::error::Result;
use crate::kernel::{normalization_n, GaussianParams, KernelSpec, PolyCoeffs};
use crate::newton::{MomentSource, MomentVector};
use crate::spectrum::{derive_spectrum_dd, GaussSpectrumDD};
#[cfg(test)]
use crate::spectrum::gaussian_moment_dd;

/// Default truncation tolerance for the basis (matched to double-double).
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-34;
pub const MIN_DIM: usize = 64;
pub const MAX_DIM: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandCoeffs {
    pub a0: f64,
    /// ε·b₀, finite at ε = 0 where b₀ itself is not.
    pub eps_b0: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl BandCoeffs {
    pub fn b0(&self, eps: f64) -> Option<f64> {
        (eps != 0.0).then(|| self.eps_b0 / eps)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a0, self.eps_b0, self.a1, self.b1, self.a2, self.b2]
    }
}

#[derive(Debug, Clone, Copy)]
struct BandCoeffsDD {
    a0: DoubleDouble,
    eps_b0: DoubleDouble,
    a1: DoubleDouble,
    b1: DoubleDouble,
    a2: DoubleDouble,
    b2: DoubleDouble,
}

fn coeffs_dd(sp: &GaussSpectrumDD, p: &PolyCoeffs) -> BandCoeffsDD {
    let one = DoubleDouble::ONE;
    let d = DoubleDouble::from_f64;
    let (eps0, eps, r, s) = (sp.eps0, sp.eps, sp.r, sp.s);
    let r2 = r * r;
    let (om, op) = (one - eps, one + eps);
    let sqrt2 = d(2.0).sqrt();

    let a0 = (om * d(p.alpha2) + (op + (r2 * s * s).mul_f64(4.0)) * d(p.gamma2) - (r2 * s).mul_f64(2.0) * d(p.alpha1)
        + r2 * d(p.gamma0))
        / r2;
    let eps_b0 = eps0 / r2 * (-(om * om) * d(p.alpha2) + op * op * d(p.gamma2));
    let a1 = -(eps0 * op) / (sqrt2 * r) * (s.mul_f64(4.0) * d(p.gamma2) - d(p.alpha1));
    let b1 = eps0 * om / (sqrt2 * r) * (s.mul_f64(2.0) * d(p.beta2) - d(p.beta1));
    let a2 = eps0 / r2.mul_f64(2.0) * (om * om * d(p.alpha2) + op * op * d(p.gamma2));
    let b2 = -(eps0 * (one - eps * eps)) / r2.mul_f64(2.0) * d(p.beta2);
    BandCoeffsDD { a0, eps_b0, a1, b1, a2, b2 }
}

/// The six band constants for `p·ρ_G` (un-normalized).
pub fn band_coeffs(g: &GaussianParams, p: &PolyCoeffs) -> BandCoeffs {
    let c = coeffs_dd(&derive_spectrum_dd(g), p);
    BandCoeffs {
        a0: c.a0.to_f64(),
        eps_b0: c.eps_b0.to_f64(),
        a1: c.a1.to_f64(),
        b1: c.b1.to_f64(),
        a2: c.a2.to_f64(),
        b2: c.b2.to_f64(),
    }
}

/// Basis size for a given |ε|: entries decay like |ε|ⁿ times a polynomial, so
/// a logarithmic margin on top of `log(tol)/log|ε|` suffices.
pub fn truncation_dim(eps: f64, tol: f64) -> usize {
    let e = eps.abs();
    if e == 0.0 {
        return 8;
    }
    let n = (tol.ln() / e.ln()).ceil() + 16.0;
    (n.max(MIN_DIM as f64) as usize).min(MAX_DIM)
}

#[derive(Debug, Clone)]
pub struct BandMatrix {
    dim: usize,
    diag: Vec<DoubleDouble>,
    up1: Vec<ComplexDD>,
    up2: Vec<ComplexDD>,
    eps: f64,
    scale: f64,
    /// Σ|entries| dropped by the truncation (both triangles).
    dropped: f64,
    /// Upper bound on the operator norm of the untruncated matrix.
    norm_bound: f64,
}

impl BandMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Applied multiplier (1/N for normalized kernels).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_real(&self) -> bool {
        self.up1.iter().chain(&self.up2).all(|z| z.is_real())
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        if m >= self.dim || n >= self.dim {
            return Complex64::new(0.0, 0.0);
        }
        match n as isize - m as isize {
            0 => Complex64::new(self.diag[m].to_f64(), 0.0),
            1 => self.up1[m].to_c64(),
            2 => self.up2[m].to_c64(),
            -1 => self.up1[n].to_c64().conj(),
            -2 => self.up2[n].to_c64().conj(),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Σ|T_ij| over the kept block, an upper bound on its trace norm.
    pub fn trace_norm_bound(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|v| v.to_f64().abs()).sum();
        let o: f64 = self.up1.iter().chain(&self.up2).map(|z| z.norm_f64()).sum();
        d + 2.0 * o + self.dropped
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        (0..self.dim).map(|m| (0..self.dim).map(|n| self.entry(m, n)).collect()).collect()
    }
}

struct RawEntries {
    eps: DoubleDouble,
    eps0: DoubleDouble,
    c: BandCoeffsDD,
}

impl RawEntries {
    // εⁿ supplied by the caller so the powers are built incrementally
    fn diag(&self, n: usize, eps_n: DoubleDouble, eps_nm1: DoubleDouble) -> DoubleDouble {
        let base = eps_n * self.eps0 * self.c.a0;
        if n == 0 {
            base
        } else {
            base + eps_nm1.mul_f64(n as f64) * self.c.eps_b0
        }
    }

    fn up1(&self, n: usize, eps_n: DoubleDouble) -> ComplexDD {
        let f = DoubleDouble::from_f64((n + 1) as f64).sqrt() * eps_n;
        ComplexDD::new(self.c.a1 * f, self.c.b1 * f)
    }

    fn up2(&self, n: usize, eps_n: DoubleDouble) -> ComplexDD {
        let f = DoubleDouble::from_f64(((n + 1) * (n + 2)) as f64).sqrt() * eps_n;
        ComplexDD::new(self.c.a2 * f, self.c.b2 * f)
    }
}

/// Builds ρ_{m,n} for `0 <= m, n < dim`, scaled by 1/N when `normalize` is
/// set and N is non-singular.
pub fn build_band_matrix(g: &GaussianParams, p: &PolyCoeffs, dim: usize, normalize: bool) -> Result<BandMatrix> {
    p.validate()?;
    let dim = dim.max(4);
    let sp = derive_spectrum_dd(g);
    let raw = RawEntries { eps: sp.eps, eps0: sp.eps0, c: coeffs_dd(&sp, p) };
    let scale = if normalize { normalization_n(g, p).map(|n| 1.0 / n).unwrap_or(1.0) } else { 1.0 };
    let scale_dd = if normalize {
        match normalization_n(g, p) {
            Ok(n) => DoubleDouble::ONE / normalization_dd(g, p, n),
            Err(_) => DoubleDouble::ONE,
        }
    } else {
        DoubleDouble::ONE
    };

    let mut diag = Vec::with_capacity(dim);
    let mut up1 = Vec::with_capacity(dim);
    let mut up2 = Vec::with_capacity(dim);
    let mut eps_nm1 = DoubleDouble::ZERO;
    let mut eps_n = DoubleDouble::ONE;
    for n in 0..dim {
        diag.push(raw.diag(n, eps_n, eps_nm1) * scale_dd);
        if n + 1 < dim {
            up1.push(raw.up1(n, eps_n).scale(scale_dd));
        }
        if n + 2 < dim {
            up2.push(raw.up2(n, eps_n).scale(scale_dd));
        }
        eps_nm1 = eps_n;
        eps_n *= raw.eps;
    }

    // mass of everything outside the kept block, in f64
    let eps = sp.eps.to_f64();
    let c = band_coeffs(g, p);
    let abs_scale = scale.abs();
    let row_terms = |n: usize| -> (f64, f64, f64) {
        let nf = n as f64;
        let en = eps.abs().powf(nf);
        let d = (en * sp.eps0.to_f64() * c.a0).abs()
            + if n > 0 { nf * eps.abs().powf(nf - 1.0) * c.eps_b0.abs() } else { 0.0 };
        let o1 = (nf + 1.0).sqrt() * en * c.a1.hypot(c.b1);
        let o2 = ((nf + 1.0) * (nf + 2.0)).sqrt() * en * c.a2.hypot(c.b2);
        (d * abs_scale, o1 * abs_scale, o2 * abs_scale)
    };
    let mut dropped = 0.0;
    if eps != 0.0 {
        let start = dim.saturating_sub(2);
        let mut n = start;
        loop {
            let (d, o1, o2) = row_terms(n);
            let mut term = 0.0;
            if n >= dim {
                term += d;
            }
            if n + 1 >= dim {
                term += 2.0 * o1;
            }
            if n + 2 >= dim {
                term += 2.0 * o2;
            }
            dropped += term;
            n += 1;
            if (term <= 1e-60 * dropped.max(f64::MIN_POSITIVE) && n > dim + 8) || n > dim + 200_000 {
                break;
            }
            if d + o1 + o2 == 0.0 && n > dim + 8 {
                break;
            }
        }
    }
    let mut norm_bound = 0.0_f64;
    for n in 0..dim {
        let mut row = diag[n].to_f64().abs();
        if n + 1 < dim {
            row += up1[n].norm_f64();
        }
        if n + 2 < dim {
            row += up2[n].norm_f64();
        }
        if n >= 1 {
            row += up1[n - 1].norm_f64();
        }
        if n >= 2 {
            row += up2[n - 2].norm_f64();
        }
        norm_bound = norm_bound.max(row);
    }
    norm_bound += dropped;

    Ok(BandMatrix { dim, diag, up1, up2, eps, scale, dropped, norm_bound })
}

// 1/N in double-double so normalized moments keep their extra digits
fn normalization_dd(g: &GaussianParams, p: &PolyCoeffs, n_f64: f64) -> DoubleDouble {
    let d = DoubleDouble::from_f64;
    let c = d(g.c());
    let e = d(g.e());
    let n = d(p.gamma0) + (d(p.gamma2) - d(p.alpha1) * e) / c.mul_f64(2.0) + d(p.gamma2) * e * e / (c * c).mul_f64(4.0);
    if n.to_f64() == 0.0 {
        d(n_f64)
    } else {
        n
    }
}

/// Band matrix for a GaussPoly spec with the default truncation rule.
pub fn band_matrix_for_spec(spec: &KernelSpec, tol: f64) -> Option<Result<BandMatrix>> {
    let (g, p, normalize) = spec.gauss_poly_parts()?;
    let eps = crate::spectrum::derive_spectrum(&g).eps;
    Some(build_band_matrix(&g, &p, truncation_dim(eps, tol), normalize))
}

trait BandScalar: Copy + Default {
    fn one() -> Self;
    fn add(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> DoubleDouble;
}

impl BandScalar for DoubleDouble {
    fn one() -> Self {
        DoubleDouble::ONE
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> DoubleDouble {
        self
    }
}

impl BandScalar for ComplexDD {
    fn one() -> Self {
        ComplexDD::real(DoubleDouble::ONE)
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn conj(self) -> Self {
        ComplexDD::conj(self)
    }
    fn re(self) -> DoubleDouble {
        self.re
    }
}

impl BandScalar for f64 {
    fn one() -> Self {
        1.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> DoubleDouble {
        DoubleDouble::from_f64(self)
    }
}

/// Hermitian band storage: row i holds columns i-w ..= i+w.
struct Banded<T> {
    n: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: BandScalar> Banded<T> {
    fn zeros(n: usize, w: usize) -> Self {
        Self { n, w, data: vec![T::default(); n * (2 * w + 1)] }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> T {
        if i.abs_diff(j) > self.w {
            return T::default();
        }
        self.data[i * (2 * self.w + 1) + (j + self.w - i)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        let w = self.w;
        self.data[i * (2 * w + 1) + (j + w - i)] = v;
    }

    /// self · t, where t has half-bandwidth 2
    fn times(&self, t: &Banded<T>) -> Banded<T> {
        let w = (self.w + t.w).min(self.n.saturating_sub(1));
        let mut out = Banded::zeros(self.n, w);
        for i in 0..self.n {
            let jlo = i.saturating_sub(w);
            let jhi = (i + w).min(self.n - 1);
            for j in jlo..=jhi {
                let llo = j.saturating_sub(t.w).max(i.saturating_sub(self.w));
                let lhi = (j + t.w).min(i + self.w).min(self.n - 1);
                let mut acc = T::default();
                for l in llo..=lhi {
                    acc = acc.add(self.get(i, l).mul(t.get(l, j)));
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Tr(self · other) for Hermitian `other`.
    fn trace_with(&self, other: &Banded<T>) -> DoubleDouble {
        let w = self.w.min(other.w);
        let mut acc = DoubleDouble::ZERO;
        for i in 0..self.n {
            let jlo = i.saturating_sub(w);
            let jhi = (i + w).min(self.n - 1);
            for j in jlo..=jhi {
                acc += self.get(i, j).mul(other.get(i, j).conj()).re();
            }
        }
        acc
    }
}

fn power_traces<T: BandScalar>(t: &Banded<T>, k_max: usize) -> Vec<DoubleDouble> {
    let half = k_max.div_ceil(2).max(1);
    let mut powers: Vec<Banded<T>> = Vec::with_capacity(half);
    let mut id = Banded::zeros(t.n, 0);
    for i in 0..t.n {
        id.set(i, i, T::one());
    }
    for j in 0..half {
        let next = if j == 0 { id.times(t) } else { powers[j - 1].times(t) };
        powers.push(next);
    }
    (1..=k_max)
        .map(|k| {
            if k == 1 {
                (0..t.n).map(|i| t.get(i, i).re()).sum()
            } else {
                let (a, b) = (k.div_ceil(2), k / 2);
                powers[a - 1].trace_with(&powers[b - 1])
            }
        })
        .collect()
}

fn fill<T: BandScalar>(m: &BandMatrix, diag: impl Fn(usize) -> T, off1: impl Fn(usize) -> T, off2: impl Fn(usize) -> T) -> Banded<T> {
    let mut b = Banded::zeros(m.dim, 2.min(m.dim - 1));
    for i in 0..m.dim {
        b.set(i, i, diag(i));
        if i + 1 < m.dim {
            let v = off1(i);
            b.set(i, i + 1, v);
            b.set(i + 1, i, v.conj());
        }
        if i + 2 < m.dim {
            let v = off2(i);
            b.set(i, i + 2, v);
            b.set(i + 2, i, v.conj());
        }
    }
    b
}

/// `M_k = Tr(T^k)` for `k = 1..=k_max`, with truncation and rounding bounds.
pub fn moments_band(m: &BandMatrix, k_max: usize) -> MomentVector {
    let values = if m.is_real() {
        let t = fill(m, |i| m.diag[i], |i| m.up1[i].re, |i| m.up2[i].re);
        power_traces(&t, k_max)
    } else {
        let t = fill(m, |i| ComplexDD::real(m.diag[i]), |i| m.up1[i], |i| m.up2[i]);
        power_traces(&t, k_max)
    };
    let abs = fill(m, |i| m.diag[i].to_f64().abs(), |i| m.up1[i].norm_f64(), |i| m.up2[i].norm_f64());
    let abs_traces = power_traces(&abs, k_max);

    let entry_rel = (m.dim as f64 + 24.0) * DD_EPS;
    let errors = (1..=k_max)
        .map(|k| {
            let kf = k as f64;
            let tail = kf * m.norm_bound.powi(k as i32 - 1) * m.dropped;
            let at = abs_traces[k - 1].to_f64();
            let rounding = (kf * entry_rel + (5.0 * kf + 10.0) * DD_EPS) * at * 1.0001;
            tail + rounding
        })
        .collect();
    MomentVector::new(values, errors, MomentSource::Band { dim: m.dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureGrid;
    use crate::spectrum::{derive_spectrum, eigenfunctions};
    use approx::assert_relative_eq;

    fn quad_element(g: &GaussianParams, p: &PolyCoeffs, nmax: usize) -> Vec<Vec<Complex64>> {
        let sp = derive_spectrum(g);
        let grid = QuadratureGrid::new(140, -sp.s, 1.2 / sp.r.min(2.0 * g.c().sqrt()).min(2.0 * g.a().sqrt())).unwrap();
        let phis: Vec<Vec<Complex64>> = grid.nodes.iter().map(|&x| eigenfunctions(&sp, g, nmax, x).unwrap()).collect();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); nmax + 1]; nmax + 1];
        for (i, &x) in grid.nodes.iter().enumerate() {
            for (j, &y) in grid.nodes.iter().enumerate() {
                let w = grid.weights[i] * grid.weights[j];
                let k = g.eval(x, y) * p.eval(x, y) * w;
                if k.norm() == 0.0 {
                    continue;
                }
                for m in 0..=nmax {
                    let lhs = phis[i][m].conj() * k;
                    for n in 0..=nmax {
                        out[m][n] += lhs * phis[j][n];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn pure_gaussian_is_diagonal() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let c = band_coeffs(&g, &PolyCoeffs::constant(1.0));
        assert_relative_eq!(c.a0, 1.0, epsilon = 1e-15);
        for v in [c.eps_b0, c.a1, c.b1, c.a2, c.b2] {
            assert!(v.abs() < 1e-15);
        }
        let m = build_band_matrix(&g, &PolyCoeffs::constant(1.0), 64, false).unwrap();
        let sp = derive_spectrum(&g);
        for n in 0..10 {
            assert_relative_eq!(m.entry(n, n).re, sp.eigenvalue(n), max_relative = 1e-14);
        }
    }

    #[test]
    fn a2_example() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let c = band_coeffs(&g, &PolyCoeffs::four_xy_plus(0.0));
        assert_relative_eq!(c.a2, 1.0 / 18.0, max_relative = 1e-14);
    }

    #[test]
    fn entries_match_quadrature() {
        let cases = [
            (GaussianParams::new(1.5, 0.3, 1.0, -0.2, 0.4).unwrap(), PolyCoeffs { alpha2: -1.0, beta2: 0.3, gamma2: 0.7, alpha1: 0.5, beta1: -0.4, gamma0: 1.2 }),
            (GaussianParams::new(0.6, -0.5, 2.0, 0.3, -0.7).unwrap(), PolyCoeffs { alpha2: 0.4, beta2: -0.2, gamma2: 1.1, alpha1: -0.3, beta1: 0.8, gamma0: 0.5 }),
        ];
        for (g, p) in cases {
            let nmax = 12;
            let q = quad_element(&g, &p, nmax);
            let m = build_band_matrix(&g, &p, 64, false).unwrap();
            for a in 0..=nmax {
                for b in 0..=nmax {
                    let d = (q[a][b] - m.entry(a, b)).norm();
                    assert!(d < 1e-8, "({a},{b}) quad {} band {}", q[a][b], m.entry(a, b));
                }
            }
        }
    }

    #[test]
    fn superposition() {
        let g = GaussianParams::new(2.0, 0.1, 0.7, 0.2, 0.3).unwrap();
        let p = PolyCoeffs { alpha2: 0.2, beta2: 0.1, gamma2: -0.3, alpha1: 0.4, beta1: 0.0, gamma0: 1.0 };
        let q = PolyCoeffs { alpha2: -0.5, beta2: 0.0, gamma2: 0.6, alpha1: 0.0, beta1: 0.7, gamma0: 0.2 };
        let (cp, cq, cs) = (band_coeffs(&g, &p), band_coeffs(&g, &q), band_coeffs(&g, &(p + q)));
        for i in 0..6 {
            assert!((cp.as_array()[i] + cq.as_array()[i] - cs.as_array()[i]).abs() < 1e-14);
        }
    }

    fn closed_m1_m2(g: &GaussianParams, p: &PolyCoeffs) -> (f64, f64) {
        let sp = derive_spectrum(g);
        let c = band_coeffs(g, p);
        let (e, e0) = (sp.eps, sp.eps0);
        let b0 = c.b0(e).unwrap();
        let m1 = e0 * c.a0 / (1.0 - e) + c.eps_b0 / (1.0 - e).powi(2);
        let q = e * e;
        let d2 = (e0 * c.a0).powi(2) / (1.0 - q) + 2.0 * e0 * c.a0 * b0 * q / (1.0 - q).powi(2) + b0 * b0 * q * (1.0 + q) / (1.0 - q).powi(3);
        let o1 = (c.a1 * c.a1 + c.b1 * c.b1) / (1.0 - q).powi(2);
        let o2 = (c.a2 * c.a2 + c.b2 * c.b2) * 2.0 / (1.0 - q).powi(3);
        (m1, d2 + 2.0 * o1 + 2.0 * o2)
    }

    #[test]
    fn low_moments_match_geometric_sums() {
        let g = GaussianParams::new(1.5, 0.2, 1.0, 0.1, 0.5).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, beta2: 0.2, gamma2: 0.8, alpha1: 0.3, beta1: 0.1, gamma0: 1.0 };
        let (m1, m2) = closed_m1_m2(&g, &p);
        let m = build_band_matrix(&g, &p, truncation_dim(derive_spectrum(&g).eps, 1e-34), false).unwrap();
        let mv = moments_band(&m, 3);
        assert_relative_eq!(mv.value(1), m1, max_relative = 1e-13);
        assert_relative_eq!(mv.value(2), m2, max_relative = 1e-13);
        assert_relative_eq!(m1, normalization_n(&g, &p).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn gaussian_moments_in_extended_precision() {
        let g = GaussianParams::real(9.0, 1.0).unwrap();
        let sp = derive_spectrum_dd(&g);
        let m = build_band_matrix(&g, &PolyCoeffs::constant(1.0), truncation_dim(0.5, 1e-34), false).unwrap();
        let mv = moments_band(&m, 20);
        for k in 1..=20u32 {
            let exact = gaussian_moment_dd(&sp, k as usize);
            let d = (mv.values()[k as usize - 1] - exact).abs().to_f64();
            assert!(d <= 1e-30 * exact.to_f64().max(1e-300) + mv.error(k as usize), "k={k} diff {d}");
            assert!(mv.error(k as usize) < 1e-28);
        }
    }

    #[test]
    fn truncation_monotone() {
        let g = GaussianParams::real(3.0, 1.0).unwrap();
        let p = PolyCoeffs::four_xy_plus(0.5);
        let mut prev = f64::INFINITY;
        for dim in [8, 16, 32, 64] {
            let m = build_band_matrix(&g, &p, dim, false).unwrap();
            assert!(m.dropped_mass() <= prev);
            prev = m.dropped_mass();
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn eps_zero_keeps_first_rows() {
        let g = GaussianParams::real(1.0, 1.0).unwrap();
        let p = PolyCoeffs::four_xy_plus(1.0);
        let m = build_band_matrix(&g, &p, truncation_dim(0.0, 1e-34), false).unwrap();
        assert_eq!(m.dim(), 8);
        assert!(m.entry(1, 1).re.is_finite());
        for n in 3..8 {
            assert_eq!(m.entry(n, n).re, 0.0);
        }
    }

    #[test]
    fn truncation_dims() {
        assert_eq!(truncation_dim(0.0, 1e-14), 8);
        assert_eq!(truncation_dim(0.1, 1e-14), 64);
        assert!(truncation_dim(0.99, 1e-34) > 7000);
        assert_eq!(truncation_dim(0.999999, 1e-34), MAX_DIM);
    }
}
