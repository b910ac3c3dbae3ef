//! Positivity verdicts with re-verifiable witnesses.
//!
//! Order of tests: the analytic witness for linear polynomial factors, the
//! diagonal scan, e₁…e_K from the best moment route, and finally the
//! Nyström eigenvalue oracle. The first conclusive refutation wins.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::band::{build_band_matrix, moments_band, truncation_dim, BandMatrix, DEFAULT_TRUNCATION_TOL, MAX_DIM};
use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, trace, GaussianParams, KernelKind, KernelSpec, PolyCoeffs};
use crate::newton::{ek_bound_check, newton_ek, theta_profile, BoundCheck, MomentVector, SymPolyVector};
use crate::nystrom::{discretize, moments_nystrom, oracle_eigenvalues, NystromMoments};
use crate::quadrature::{QuadratureGrid, MAX_NODES};
use crate::spectrum::derive_spectrum;

pub const DIAGONAL_POINTS: usize = 257;
pub const DIAGONAL_HALF_WIDTH: f64 = 6.0;
pub const DIAGONAL_REL_TOL: f64 = 1e-12;
/// Oracle eigenvalues below −this refute positivity.
pub const ORACLE_TOL: f64 = 1e-8;
/// Moments agreeing within this (relative to max(1, |M_k|)) count as consistent.
pub const CROSS_ROUTE_TOL: f64 = 1e-8;
pub const CROSS_CHECK_ORDERS: usize = 12;
pub const CERTIFICATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalPoint {
    pub z: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearWitness {
    pub b: f64,
    pub c: f64,
    /// (2A+1)α₁b + (2C+1)β₁c + (2A+1)(2C+1)γ₀.
    pub factor: f64,
    /// Π(b, c); may overflow to −∞ for extreme b.
    pub pi: f64,
    /// Π·exp(−b²/(2(2C+1))), always representable.
    pub pi_scaled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Witness {
    NegativeEk { k: usize, value: f64, err: f64 },
    DiagonalPoint(DiagonalPoint),
    LinearWitness(LinearWitness),
    OracleEig { min_eigenvalue: f64, grid: usize },
}

impl Witness {
    pub fn kind(&self) -> &'static str {
        match self {
            Witness::NegativeEk { .. } => "NegativeEk",
            Witness::DiagonalPoint(_) => "DiagonalPoint",
            Witness::LinearWitness(_) => "LinearWitness",
            Witness::OracleEig { .. } => "OracleEig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    NonPositive(Witness),
    /// e₁…e_depth pass the sign test. `min_margin` is the smallest
    /// e_k + max(tol, err_k), the distance above the refutation threshold,
    /// attained at `margin_k`. Not a proof of positivity beyond `depth`.
    PositiveUpTo { depth: usize, min_margin: f64, margin_k: usize },
}

impl Verdict {
    pub fn is_positive(&self) -> bool {
        matches!(self, Verdict::PositiveUpTo { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::NonPositive(w) => Some(w),
            Verdict::PositiveUpTo { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub engines: Vec<String>,
    pub depth_requested: usize,
    pub band_dim: Option<usize>,
    pub nystrom_grid: Option<usize>,
    /// max_k |M_k^band − M_k^nys| / max(1, |M_k|) for k ≤ 12.
    pub cross_check_deviation: Option<f64>,
    pub trace_norm: Option<f64>,
    pub bound_check: Option<BoundCheck>,
    pub normalization_singular: bool,
    pub moments: Option<MomentVector>,
    pub ek: Option<SymPolyVector>,
    pub oracle_min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub verdict: Verdict,
    pub provenance: Provenance,
    /// Set once a NonPositive witness has been independently recomputed.
    pub verified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Band route when available, Nyström cross-check and oracle.
    Auto,
    Band,
    Nystrom,
    Both,
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Engine::Auto),
            "band" => Ok(Engine::Band),
            "nystrom" => Ok(Engine::Nystrom),
            "both" => Ok(Engine::Both),
            _ => Err(Error::Config(format!("unknown engine '{s}' (band|nystrom|both|auto)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub depth: usize,
    pub engine: Engine,
    /// User sign tolerance; e_k ≥ −max(tol, err_k) passes.
    pub tol: f64,
    pub grid_size: Option<usize>,
    pub truncation_tol: f64,
    /// Run the eigenvalue oracle when the e_k test does not refute.
    pub oracle: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { depth: 20, engine: Engine::Auto, tol: 0.0, grid_size: None, truncation_tol: DEFAULT_TRUNCATION_TOL, oracle: true }
    }
}

/// 257 points over center ± 6σ of the diagonal envelope.
pub fn diagonal_scan_points(spec: &KernelSpec) -> Vec<f64> {
    let (c, s) = spec.envelope();
    let l = DIAGONAL_HALF_WIDTH * s;
    let n = DIAGONAL_POINTS;
    (0..n).map(|i| c - l + 2.0 * l * i as f64 / (n - 1) as f64).collect()
}

/// First z with Re ρ(z,z) < −10⁻¹²·max|ρ(z,z)|. A non-real diagonal value is
/// reported as a Hermiticity violation.
pub fn diagonal_check(spec: &KernelSpec, zs: &[f64]) -> Result<Option<DiagonalPoint>> {
    let vals: Vec<Complex64> = zs.iter().map(|&z| eval_kernel(spec, z, z)).collect::<Result<_>>()?;
    let peak = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = DIAGONAL_REL_TOL * peak;
    for v in &vals {
        if v.im.abs() > 1e-10 * peak.max(f64::MIN_POSITIVE) {
            return Err(Error::NonHermitianKernel { defect: v.im.abs() });
        }
    }
    Ok(zs.iter().zip(&vals).find(|(_, v)| v.re < -tol).map(|(&z, v)| DiagonalPoint { z, value: v.re }))
}

fn pi_closed_form(g: &GaussianParams, alpha1: f64, beta1: f64, gamma0: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let (a, cc, e) = (g.a(), g.c(), g.e());
    let (ta, tc) = (2.0 * a + 1.0, 2.0 * cc + 1.0);
    let k = ta * tc;
    let factor = ta * alpha1 * b + tc * beta1 * c + k * gamma0;
    let lead = 2.0 * (std::f64::consts::PI * cc).sqrt() * (-e * e / (4.0 * cc)).exp() * k.powf(-1.5);
    let expo = (2.0 * a * b * b - 2.0 * cc * c * c + b * b - c * c) / (2.0 * (4.0 * a * cc + 2.0 * a + 2.0 * cc + 1.0));
    let shift = b * b / (2.0 * tc);
    (factor, lead * expo.exp() * factor, lead * (expo - shift).exp() * factor)
}

/// Analytic non-positivity witness for `(α₁(x+y) + iβ₁(x−y) + γ₀)·ρ_G`.
///
/// The trial function is `Ψ(x) = exp(−x² + bx + icx − iBx² + Ex − iDx)`;
/// (b, c) is chosen so the linear factor of Π equals
/// `−(2A+1)(2C+1)|γ₀| − 1`, using b alone whenever α₁ ≠ 0.
pub fn linear_witness(g: &GaussianParams, alpha1: f64, beta1: f64, gamma0: f64) -> Result<LinearWitness> {
    if alpha1 == 0.0 && beta1 == 0.0 {
        return Err(Error::ConstantLinearFactor);
    }
    if ![alpha1, beta1, gamma0].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("linear coefficients must be finite".into()));
    }
    let (ta, tc) = (2.0 * g.a() + 1.0, 2.0 * g.c() + 1.0);
    let k = ta * tc;
    let target = -k * gamma0.abs() - 1.0;
    let rhs = target - k * gamma0;
    let (b, c) = if alpha1 != 0.0 { (rhs / (ta * alpha1), 0.0) } else { (0.0, rhs / (tc * beta1)) };
    let (factor, pi, pi_scaled) = pi_closed_form(g, alpha1, beta1, gamma0, b, c);
    Ok(LinearWitness { b, c, factor, pi, pi_scaled })
}

/// Π·exp(−b²/(2(2C+1))) from the separated Gaussian integrals in
/// u = x+y, v = x−y.
fn pi_separated(g: &GaussianParams, p: &PolyCoeffs, b: f64, c: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let (au, av) = (0.5 + g.c(), 0.5 + g.a());
    let pref = 2.0 * (g.c() / pi).sqrt() * (-g.e() * g.e() / (4.0 * g.c())).exp();
    // ∫e^{−au u² + bu} du = √(π/au)·e^{b²/4au}; the exponential is the shift
    let iu0 = (pi / au).sqrt();
    let iu1 = b / (2.0 * au) * iu0;
    let iv0 = (pi / av).sqrt() * (-c * c / (4.0 * av)).exp();
    let iv1 = Complex64::new(0.0, -c / (2.0 * av)) * iv0;
    let total = Complex64::new(p.alpha1 * iu1 * iv0, 0.0) + Complex64::new(0.0, p.beta1) * iu0 * iv1 + p.gamma0 * iu0 * iv0;
    0.5 * pref * total.re
}

/// The same scaled Π by tensor Gauss–Hermite quadrature of Ψ*(x)Ψ(y)ρ(x,y).
/// `None` when the value is too small against the integrand to resolve.
fn pi_quadrature(g: &GaussianParams, p: &PolyCoeffs, b: f64, c: f64) -> Result<Option<f64>> {
    let (au, av) = (0.5 + g.c(), 0.5 + g.a());
    let u0 = b / (2.0 * au);
    let shift = b * b / (4.0 * au);
    let omega = c.abs() / av.sqrt();
    if omega * omega / 4.0 > 18.0 {
        return Ok(None);
    }
    let m = 64 + (4.0 * omega * omega) as usize;
    if m > MAX_NODES {
        return Ok(None);
    }
    let gu = QuadratureGrid::new(m, u0, 1.0 / au.sqrt())?;
    let gv = QuadratureGrid::new(m, 0.0, 1.0 / av.sqrt())?;
    let log_psi = |x: f64, conj: bool| {
        let re = -x * x + b * x + g.e() * x;
        let im = c * x - g.b() * x * x - g.d() * x;
        Complex64::new(re, if conj { -im } else { im })
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for (&u, &wu) in gu.nodes.iter().zip(&gu.weights) {
        for (&v, &wv) in gv.nodes.iter().zip(&gv.weights) {
            let (x, y) = (0.5 * (u + v), 0.5 * (u - v));
            let l = log_psi(x, true) + log_psi(y, false) + g.log_eval(x, y) - shift;
            acc += (wu * wv * 0.5) * l.exp() * p.eval(x, y);
        }
    }
    Ok(Some(acc.re))
}

/// Recomputes Π by the separated integrals and, when resolvable, by
/// quadrature; both must agree with the closed form and stay negative.
pub fn verify_linear_witness(g: &GaussianParams, p: &PolyCoeffs, w: &LinearWitness) -> Result<()> {
    let sep = pi_separated(g, p, w.b, w.c);
    let scale = w.pi_scaled.abs().max(f64::MIN_POSITIVE);
    if !(sep < 0.0) || (sep - w.pi_scaled).abs() > 1e-9 * scale {
        return Err(Error::WitnessNotReproduced(format!("separated Π {sep:e} vs closed form {:e}", w.pi_scaled)));
    }
    if let Some(q) = pi_quadrature(g, p, w.b, w.c)? {
        let mag = 2.0 * (g.c() / std::f64::consts::PI).sqrt() * (p.alpha1.abs() + p.beta1.abs() + p.gamma0.abs() + 1.0);
        if !(q < 0.0) || (q - w.pi_scaled).abs() > 1e-8 * scale.max(1e-6 * mag) {
            return Err(Error::WitnessNotReproduced(format!("quadrature Π {q:e} vs closed form {:e}", w.pi_scaled)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSReport {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    /// ⟨xp+px⟩/2 − ⟨x⟩⟨p⟩.
    pub covariance: f64,
    pub sigma_rs: f64,
    /// σ_RS/ħ² − 1/4.
    pub z: f64,
}

struct DiagDerivs {
    rho: Complex64,
    dx: Complex64,
    dxx: Complex64,
}

fn gauss_poly_derivs(g: &GaussianParams, p: &PolyCoeffs, scale: f64, x: f64) -> DiagDerivs {
    let i = Complex64::new(0.0, 1.0);
    let y = x;
    let qx = 2.0 * g.a() * (x - y) + 2.0 * i * g.b() * x + 2.0 * g.c() * (x + y) + i * g.d() + g.e();
    let qxx = Complex64::new(2.0 * g.a() + 2.0 * g.c(), 2.0 * g.b());
    let pv = p.eval(x, y);
    let px = 2.0 * p.alpha2 * (x - y) + 2.0 * i * p.beta2 * x + 2.0 * p.gamma2 * (x + y) + p.alpha1 + i * p.beta1;
    let pxx = Complex64::new(2.0 * p.alpha2 + 2.0 * p.gamma2, 2.0 * p.beta2);
    let rg = g.eval(x, y) * scale;
    DiagDerivs { rho: pv * rg, dx: (px - pv * qx) * rg, dxx: (pxx - 2.0 * px * qx + pv * (qx * qx - qxx)) * rg }
}

/// Robertson–Schrödinger quantities from diagonal moments of x and p.
pub fn rs_uncertainty(spec: &KernelSpec) -> Result<RSReport> {
    let tr = trace(spec)?;
    if spec.normalization_singular() || (tr.value - 1.0).abs() > 1e-8 {
        return Err(Error::Undefined(format!("trace is {} rather than 1", tr.value)));
    }
    let hbar = spec.hbar();
    let i = Complex64::new(0.0, 1.0);
    let (grid, derivs): (QuadratureGrid, Box<dyn Fn(f64) -> Result<DiagDerivs>>) = match spec.kind() {
        KernelKind::GaussPoly { gauss, poly, .. } => {
            let (g, p, s) = (*gauss, *poly, spec.scale_factor());
            let grid = QuadratureGrid::new(96, -g.e() / (4.0 * g.c()), 1.0 / (2.0 * g.c().sqrt()))?;
            (grid, Box::new(move |x| Ok(gauss_poly_derivs(&g, &p, s, x))))
        }
        KernelKind::Generic(k) => {
            let grid = QuadratureGrid::new(128, k.center, k.envelope)?;
            let h = 1e-5 * k.envelope;
            let sp = spec.clone();
            (
                grid,
                Box::new(move |x| {
                    let f0 = eval_kernel(&sp, x, x)?;
                    let fp = eval_kernel(&sp, x + h, x)?;
                    let fm = eval_kernel(&sp, x - h, x)?;
                    Ok(DiagDerivs { rho: f0, dx: (fp - fm) / (2.0 * h), dxx: (fp - 2.0 * f0 + fm) / (h * h) })
                }),
            )
        }
    };
    let (mut mx, mut mx2, mut mp, mut mp2, mut mxp) = (0.0, 0.0, Complex64::default(), Complex64::default(), Complex64::default());
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        let d = derivs(x)?;
        mx += w * x * d.rho.re;
        mx2 += w * x * x * d.rho.re;
        mp += w * (-i * hbar) * d.dx;
        mp2 += w * (-hbar * hbar) * d.dxx;
        mxp += w * (-i * hbar) * (2.0 * x * d.dx + d.rho);
    }
    let var_x = mx2 - mx * mx;
    let var_p = mp2.re - mp.re * mp.re;
    let covariance = 0.5 * mxp.re - mx * mp.re;
    let sigma_rs = var_x * var_p - covariance * covariance;
    Ok(RSReport { mean_x: mx, mean_p: mp.re, var_x, var_p, covariance, sigma_rs, z: sigma_rs / (hbar * hbar) - 0.25 })
}

struct Route {
    moments: MomentVector,
    ek: SymPolyVector,
}

fn band_route(g: &GaussianParams, p: &PolyCoeffs, normalize: bool, k: usize, tol: f64, extra: usize) -> Result<(BandMatrix, Route)> {
    let eps = derive_spectrum(g).eps;
    let dim = (truncation_dim(eps, tol) + extra).min(MAX_DIM);
    let m = build_band_matrix(g, p, dim, normalize)?;
    let moments = moments_band(&m, k);
    let ek = newton_ek(&moments);
    Ok((m, Route { moments, ek }))
}

fn nystrom_route(spec: &KernelSpec, k: usize, grid: Option<usize>) -> Result<(NystromMoments, Route)> {
    let op = discretize(spec, grid, None)?;
    let nm = moments_nystrom(&op, k)?;
    let ek = newton_ek(&nm.moments);
    let moments = nm.moments.clone();
    Ok((nm, Route { moments, ek }))
}

fn reverify_negative_ek(spec: &KernelSpec, band: bool, opts: &CertifyOptions, k: usize, value: f64, err: f64, first: usize) -> Result<()> {
    let (v2, e2) = if band {
        let (g, p, normalize) = spec.gauss_poly_parts().expect("band route needs GaussPoly");
        let extra = truncation_dim(derive_spectrum(&g).eps, opts.truncation_tol) / 2 + 16;
        let (_, r) = band_route(&g, &p, normalize, k, opts.truncation_tol, extra)?;
        (r.ek.value(k), r.ek.error(k))
    } else {
        let m = first.saturating_mul(2).min(MAX_NODES);
        let (_, r) = nystrom_route(spec, k, Some(m))?;
        (r.ek.value(k), r.ek.error(k))
    };
    if v2 < 0.0 && (v2 - value).abs() <= 3.0 * (err + e2) + 1e-300 {
        Ok(())
    } else {
        Err(Error::WitnessNotReproduced(format!("e_{k} = {value:e} ± {err:e} recomputed as {v2:e} ± {e2:e}")))
    }
}

fn cross_check(a: &Route, b: &Route) -> Result<f64> {
    let n = a.moments.len().min(b.moments.len());
    let mut dev = 0.0_f64;
    for k in 1..=n.min(CROSS_CHECK_ORDERS) {
        let (x, y) = (a.moments.value(k), b.moments.value(k));
        dev = dev.max((x - y).abs() / x.abs().max(1.0));
    }
    for k in 1..=n {
        let (ea, eb) = (a.ek.value(k), b.ek.value(k));
        let (sa, sb) = (a.ek.error(k), b.ek.error(k));
        let conflict = (ea < -3.0 * sa && eb > 3.0 * sb) || (eb < -3.0 * sb && ea > 3.0 * sa);
        if conflict && (ea - eb).abs() > 3.0 * (sa + sb) {
            return Err(Error::EngineDisagreement(format!(
                "e_{k}: {ea:e} ± {sa:e} ({}) vs {eb:e} ± {sb:e} ({})",
                a.moments.source(),
                b.moments.source()
            )));
        }
    }
    Ok(dev)
}

/// Runs the test pipeline and returns the first conclusive refutation or
/// PositiveUpTo at the certified depth.
pub fn certify(spec: &KernelSpec, opts: &CertifyOptions) -> Result<Certificate> {
    if opts.depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let mut prov = Provenance { depth_requested: opts.depth, normalization_singular: spec.normalization_singular(), ..Default::default() };
    let done = |verdict: Verdict, prov: Provenance, verified: bool| Ok(Certificate { verdict, provenance: prov, verified });

    // analytic, and on linear factors the diagonal always dips negative too
    if let Some((g, p, _)) = spec.gauss_poly_parts() {
        if p.is_linear() && (p.alpha1 != 0.0 || p.beta1 != 0.0) {
            prov.engines.push("linear-witness".into());
            let ps = p.scaled(spec.scale_factor());
            let w = linear_witness(&g, ps.alpha1, ps.beta1, ps.gamma0)?;
            verify_linear_witness(&g, &ps, &w)?;
            return done(Verdict::NonPositive(Witness::LinearWitness(w)), prov, true);
        }
    }

    prov.engines.push("diagonal".into());
    if let Some(d) = diagonal_check(spec, &diagonal_scan_points(spec))? {
        let again = eval_kernel(spec, d.z, d.z)?;
        let verified = match spec.gauss_poly_parts() {
            Some((g, p, _)) => {
                let f = p.eval(d.z, d.z) * g.eval(d.z, d.z) * spec.scale_factor();
                f.re < 0.0 && (f.re - again.re).abs() <= 1e-12 * f.norm()
            }
            None => again.re < 0.0,
        };
        if !verified {
            return Err(Error::WitnessNotReproduced(format!("diagonal value at z = {}", d.z)));
        }
        return done(Verdict::NonPositive(Witness::DiagonalPoint(d)), prov, true);
    }

    let k = opts.depth;
    let parts = spec.gauss_poly_parts();
    let use_band = parts.is_some() && opts.engine != Engine::Nystrom;
    let use_nys = !use_band || matches!(opts.engine, Engine::Auto | Engine::Both);

    let band = if use_band {
        let (g, p, normalize) = parts.unwrap();
        prov.engines.push("band".into());
        let (m, r) = band_route(&g, &p, normalize, k, opts.truncation_tol, 0)?;
        prov.band_dim = Some(m.dim());
        let s1 = if p.as_array()[..5].iter().all(|&v| v == 0.0) {
            derive_spectrum(&g).trace_norm() * (p.gamma0 * m.scale()).abs()
        } else {
            m.trace_norm_bound()
        };
        prov.trace_norm = Some(s1);
        Some(r)
    } else {
        None
    };
    let nys = if use_nys {
        prov.engines.push("nystrom".into());
        let (nm, r) = nystrom_route(spec, k, opts.grid_size)?;
        prov.nystrom_grid = Some(nm.eigenvalues.len());
        prov.oracle_min_eigenvalue = nm.eigenvalues.last().copied();
        // the discrete Σ|μ| is far tighter than the band's entry-sum bound
        let closed_form = parts.is_some_and(|(_, p, _)| p.as_array()[..5].iter().all(|&v| v == 0.0));
        if !closed_form {
            prov.trace_norm = Some(nm.trace_norm);
        }
        Some(r)
    } else {
        None
    };
    if let (Some(b), Some(n)) = (&band, &nys) {
        prov.cross_check_deviation = Some(cross_check(b, n)?);
    }

    let primary = band.as_ref().or(nys.as_ref()).expect("at least one engine runs");
    if let Some(s1) = prov.trace_norm {
        prov.bound_check = Some(ek_bound_check(&primary.ek, s1));
    }
    prov.moments = Some(primary.moments.clone());
    prov.ek = Some(primary.ek.clone());

    if let Some(kneg) = primary.ek.first_negative(opts.tol) {
        let (value, err) = (primary.ek.value(kneg), primary.ek.error(kneg));
        let first = prov.nystrom_grid.unwrap_or(0);
        reverify_negative_ek(spec, band.is_some(), opts, kneg, value, err, first)?;
        return done(Verdict::NonPositive(Witness::NegativeEk { k: kneg, value, err }), prov, true);
    }

    if opts.oracle && matches!(opts.engine, Engine::Auto | Engine::Both | Engine::Nystrom) {
        let min_eig = match prov.oracle_min_eigenvalue {
            Some(v) => v,
            None => {
                let ev = oracle_eigenvalues(&discretize(spec, opts.grid_size, None)?)?;
                *ev.last().unwrap()
            }
        };
        prov.oracle_min_eigenvalue = Some(min_eig);
        if !prov.engines.iter().any(|e| e == "oracle") {
            prov.engines.push("oracle".into());
        }
        let grid = prov.nystrom_grid.unwrap_or(0);
        if min_eig < -ORACLE_TOL {
            let m2 = grid.max(32).saturating_mul(2).min(MAX_NODES);
            let ev2 = oracle_eigenvalues(&discretize(spec, Some(m2), None)?)?;
            let min2 = *ev2.last().unwrap();
            if !(min2 < -ORACLE_TOL && (min2 - min_eig).abs() <= 0.1 * min_eig.abs()) {
                return Err(Error::WitnessNotReproduced(format!("oracle eigenvalue {min_eig:e} became {min2:e} at m = {m2}")));
            }
            return done(Verdict::NonPositive(Witness::OracleEig { min_eigenvalue: min_eig, grid }), prov, true);
        }
    }

    let theta = theta_profile(&primary.ek, opts.tol);
    let depth = theta.depth();
    let (margin_k, min_margin) = (1..=depth.max(1))
        .map(|j| (j, primary.ek.value(j) + opts.tol.max(primary.ek.error(j))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    done(Verdict::PositiveUpTo { depth, min_margin, margin_k }, prov, false)
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "certificate-version: {CERTIFICATE_VERSION}")?;
        match &self.verdict {
            Verdict::PositiveUpTo { depth, min_margin, margin_k } => {
                writeln!(f, "verdict: PositiveUpTo")?;
                writeln!(f, "depth: {depth}")?;
                writeln!(f, "min_margin: {min_margin:e}")?;
                writeln!(f, "margin_k: {margin_k}")?;
                writeln!(f, "note: e_1..e_{depth} non-negative within error bars; no claim beyond depth {depth}")?;
            }
            Verdict::NonPositive(w) => {
                writeln!(f, "verdict: NonPositive")?;
                writeln!(f, "witness: {}", w.kind())?;
                match w {
                    Witness::NegativeEk { k, value, err } => {
                        writeln!(f, "k: {k}")?;
                        writeln!(f, "value: {value:e}")?;
                        writeln!(f, "error: {err:e}")?;
                    }
                    Witness::DiagonalPoint(d) => {
                        writeln!(f, "z: {:e}", d.z)?;
                        writeln!(f, "value: {:e}", d.value)?;
                    }
                    Witness::LinearWitness(l) => {
                        writeln!(f, "b: {:e}", l.b)?;
                        writeln!(f, "c: {:e}", l.c)?;
                        writeln!(f, "factor: {:e}", l.factor)?;
                        writeln!(f, "value: {:e}", l.pi)?;
                        writeln!(f, "value_scaled: {:e}", l.pi_scaled)?;
                    }
                    Witness::OracleEig { min_eigenvalue, grid } => {
                        writeln!(f, "value: {min_eigenvalue:e}")?;
                        writeln!(f, "grid: {grid}")?;
                    }
                }
                writeln!(f, "verified: {}", self.verified)?;
            }
        }
        let p = &self.provenance;
        writeln!(f, "engines: {}", p.engines.join(","))?;
        writeln!(f, "depth_requested: {}", p.depth_requested)?;
        if let Some(n) = p.band_dim {
            writeln!(f, "band_dim: {n}")?;
        }
        if let Some(m) = p.nystrom_grid {
            writeln!(f, "nystrom_grid: {m}")?;
        }
        if let Some(d) = p.cross_check_deviation {
            writeln!(f, "cross_check_deviation: {d:e}")?;
        }
        if let Some(s) = p.trace_norm {
            writeln!(f, "trace_norm_bound: {s:e}")?;
        }
        if let Some(v) = p.oracle_min_eigenvalue {
            writeln!(f, "oracle_min_eigenvalue: {v:e}")?;
        }
        if let Some(b) = &p.bound_check {
            writeln!(f, "ek_bound: {}", if b.holds() { "ok" } else { "violated" })?;
        }
        if p.normalization_singular {
            writeln!(f, "normalization: singular (raw kernel used)")?;
        }
        if let (Some(m), Some(e)) = (&p.moments, &p.ek) {
            for k in 1..=m.len() {
                writeln!(f, "M_{k}: {:e} ± {:e}", m.value(k), m.error(k))?;
            }
            for k in 1..=e.len() {
                writeln!(f, "e_{k}: {:e} ± {:e}", e.value(k), e.error(k))?;
            }
        }
        Ok(())
    }
}

/// Verdict and witness read back from the text form.
pub fn parse_verdict(text: &str) -> Result<Verdict> {
    let mut kv = std::collections::HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(':') {
            kv.entry(k.trim().to_string()).or_insert_with(|| v.trim().to_string());
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("certificate lacks '{k}'")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Config(format!("bad number for '{k}'"))) };
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Config(format!("bad integer for '{k}'"))) };
    match get("verdict")?.as_str() {
        "PositiveUpTo" => Ok(Verdict::PositiveUpTo { depth: int("depth")?, min_margin: num("min_margin")?, margin_k: int("margin_k")? }),
        "NonPositive" => Ok(Verdict::NonPositive(match get("witness")?.as_str() {
            "NegativeEk" => Witness::NegativeEk { k: int("k")?, value: num("value")?, err: num("error")? },
            "DiagonalPoint" => Witness::DiagonalPoint(DiagonalPoint { z: num("z")?, value: num("value")? }),
            "LinearWitness" => Witness::LinearWitness(LinearWitness {
                b: num("b")?,
                c: num("c")?,
                factor: num("factor")?,
                pi: num("value")?,
                pi_scaled: num("value_scaled")?,
            }),
            "OracleEig" => Witness::OracleEig { min_eigenvalue: num("value")?, grid: int("grid")? },
            other => return Err(Error::Config(format!("unknown witness '{other}'"))),
        })),
        other => Err(Error::Config(format!("unknown verdict '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts(k: usize) -> CertifyOptions {
        CertifyOptions { depth: k, ..Default::default() }
    }

    #[test]
    fn gaussian_positive() {
        let g = GaussianParams::new(4.0, 0.3, 1.0, 0.2, -0.4).unwrap();
        let c = certify(&KernelSpec::gaussian(g), &opts(20)).unwrap();
        match c.verdict {
            Verdict::PositiveUpTo { depth, min_margin, .. } => {
                assert_eq!(depth, 20);
                assert!(min_margin > 0.0);
            }
            v => panic!("{v:?}"),
        }
        assert!(c.provenance.bound_check.unwrap().holds());
        assert!(c.provenance.cross_check_deviation.unwrap() < 1e-8);
    }

    #[test]
    fn gaussian_a_less_than_c() {
        let g = GaussianParams::real(1.0, 4.0).unwrap();
        let c = certify(&KernelSpec::gaussian(g), &opts(20)).unwrap();
        match c.verdict {
            Verdict::NonPositive(Witness::NegativeEk { k, value, .. }) => {
                assert_eq!(k, 2);
                assert_relative_eq!(value, -0.5, max_relative = 1e-12);
            }
            v => panic!("{v:?}"),
        }
        assert!(c.verified);
    }

    #[test]
    fn quadratic_gamma2_one_positive() {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2: 1.0, gamma0: 1.0, ..PolyCoeffs::constant(0.0) };
        let c = certify(&KernelSpec::gauss_poly(g, p, true).unwrap(), &opts(20)).unwrap();
        assert!(matches!(c.verdict, Verdict::PositiveUpTo { depth: 20, .. }), "{}", c);
    }

    #[test]
    fn negative_gamma0_hits_diagonal() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let spec = KernelSpec::gauss_poly(g, PolyCoeffs::four_xy_plus(-0.5), false).unwrap();
        assert!(diagonal_check(&spec, &[0.0]).unwrap().is_some());
        let c = certify(&spec, &opts(10)).unwrap();
        assert!(matches!(c.verdict, Verdict::NonPositive(Witness::DiagonalPoint(_))));
    }

    #[test]
    fn diagonal_positive_for_gaussian() {
        let g = GaussianParams::new(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let spec = KernelSpec::gaussian(g);
        assert!(diagonal_check(&spec, &diagonal_scan_points(&spec)).unwrap().is_none());
    }

    #[test]
    fn quadratic_gamma2_five_needs_ek() {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2: 5.0, gamma0: 1.0, ..PolyCoeffs::constant(0.0) };
        let spec = KernelSpec::gauss_poly(g, p, true).unwrap();
        assert!(diagonal_check(&spec, &diagonal_scan_points(&spec)).unwrap().is_none());
        let c = certify(&spec, &opts(20)).unwrap();
        assert!(matches!(c.verdict, Verdict::NonPositive(Witness::NegativeEk { .. })), "{c}");
        let ev = oracle_eigenvalues(&discretize(&spec, None, None).unwrap()).unwrap();
        assert!(*ev.last().unwrap() < 0.0);
    }

    #[test]
    fn linear_witness_simple() {
        let g = GaussianParams::real(1.0, 1.0).unwrap();
        let w = linear_witness(&g, 1.0, 0.0, 0.0).unwrap();
        assert!(w.b < 0.0 && w.pi < 0.0);
        assert_relative_eq!(w.factor, -1.0, max_relative = 1e-14);
        // b = −1, c = 0 by hand: 3·(−1) < 0
        let (f, pi, _) = pi_closed_form(&g, 1.0, 0.0, 0.0, -1.0, 0.0);
        assert!(f == -3.0 && pi < 0.0);
        assert!(matches!(linear_witness(&g, 0.0, 0.0, 1.0), Err(Error::ConstantLinearFactor)));
    }

    #[test]
    fn linear_witness_reverifies() {
        let cases = [
            (GaussianParams::new(2.0, 0.0, 1.0, 0.0, 1.0).unwrap(), 1.0, 0.0, 2.0),
            (GaussianParams::new(0.5, 0.7, 2.0, -0.3, 0.4).unwrap(), -0.4, 1.3, 0.8),
            (GaussianParams::new(3.0, 0.2, 0.5, 0.1, -1.0).unwrap(), 0.0, 0.9, 0.3),
        ];
        for (g, a1, b1, g0) in cases {
            let w = linear_witness(&g, a1, b1, g0).unwrap();
            let p = PolyCoeffs::linear(a1, b1, g0);
            verify_linear_witness(&g, &p, &w).unwrap();
            assert!(pi_quadrature(&g, &p, w.b, w.c).unwrap().is_some());
        }
    }

    #[test]
    fn linear_family_refuted_by_certify() {
        let g = GaussianParams::new(2.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let spec = KernelSpec::gauss_poly(g, PolyCoeffs::linear(1.0, 0.0, 2.0), true).unwrap();
        let c = certify(&spec, &opts(10)).unwrap();
        assert!(matches!(c.verdict, Verdict::NonPositive(Witness::LinearWitness(_))));
        let ev = oracle_eigenvalues(&discretize(&spec, None, None).unwrap()).unwrap();
        assert!(*ev.last().unwrap() < 0.0);
    }

    #[test]
    fn rs_pure_state_minimal() {
        let g = GaussianParams::new(1.3, 0.4, 1.3, -0.2, 0.6).unwrap();
        let r = rs_uncertainty(&KernelSpec::gaussian(g)).unwrap();
        assert!(r.z.abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn rs_gaussian_matches_purity() {
        for (a, c) in [(4.0, 1.0), (2.0, 0.5), (1.0, 4.0)] {
            let g = GaussianParams::new(a, 0.3, c, 0.1, 0.2).unwrap();
            let sp = derive_spectrum(&g);
            let m2 = sp.eps0 * sp.eps0 / (1.0 - sp.eps * sp.eps);
            let r = rs_uncertainty(&KernelSpec::gaussian(g).with_hbar(1.7).unwrap()).unwrap();
            assert_relative_eq!(r.z, 1.0 / (4.0 * m2 * m2) - 0.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn rs_generic_matches_analytic() {
        let g = GaussianParams::new(2.0, 0.3, 1.0, 0.2, 0.1).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2: 1.0, gamma0: 1.0, ..PolyCoeffs::constant(0.0) };
        let spec = KernelSpec::gauss_poly(g, p, true).unwrap();
        let s2 = spec.clone();
        let (c, l) = spec.envelope();
        let generic = KernelSpec::generic(move |x, y| eval_kernel(&s2, x, y).unwrap(), l).unwrap().with_center(c);
        let (ra, rg) = (rs_uncertainty(&spec).unwrap(), rs_uncertainty(&generic).unwrap());
        assert!((ra.z - rg.z).abs() < 1e-4, "{ra:?} {rg:?}");
    }

    #[test]
    fn rs_undefined_without_unit_trace() {
        let g = GaussianParams::real(2.0, 1.0).unwrap();
        let spec = KernelSpec::gauss_poly(g, PolyCoeffs::constant(2.0), false).unwrap();
        assert!(matches!(rs_uncertainty(&spec), Err(Error::Undefined(_))));
    }

    #[test]
    fn text_roundtrip() {
        let g = GaussianParams::real(1.0, 4.0).unwrap();
        let c = certify(&KernelSpec::gaussian(g), &opts(8)).unwrap();
        let text = c.to_string();
        assert_eq!(parse_verdict(&text).unwrap().witness().unwrap().kind(), "NegativeEk");
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let c = certify(&KernelSpec::gaussian(g), &opts(8)).unwrap();
        let v = parse_verdict(&c.to_string()).unwrap();
        assert!(matches!(v, Verdict::PositiveUpTo { depth: 8, .. }));
    }

    #[test]
    fn monotone_refutation() {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2: -0.05, gamma0: 1.0, ..PolyCoeffs::constant(0.0) };
        let spec = KernelSpec::gauss_poly(g, p, true).unwrap();
        let mut first = None;
        for k in [7, 8, 12, 20] {
            if let Verdict::NonPositive(Witness::NegativeEk { k: kk, .. }) = certify(&spec, &opts(k)).unwrap().verdict {
                if let Some(f) = first {
                    assert_eq!(kk, f);
                }
                first.get_or_insert(kk);
            }
        }
        assert!(first.is_some());
    }
}
