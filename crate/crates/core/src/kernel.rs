//! Kernel families ρ(x, y), their evaluation, normalization and trace.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

/// Below this magnitude the normalization factor is treated as zero.
pub const NORMALIZATION_FLOOR: f64 = 1e-14;

/// Parameters of the Gaussian kernel
/// `ρ_G(x,y) = 2√(C/π)·exp[-(A(x-y)² + iB(x²-y²) + C(x+y)² + iD(x-y) + E(x+y) + E²/4C)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

impl GaussianParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64) -> Result<Self> {
        if ![a, b, c, d, e].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("Gaussian parameters must be finite".into()));
        }
        if !(a > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!("need A > 0 and C > 0, got A={a}, C={c}")));
        }
        Ok(Self { a, b, c, d, e })
    }

    /// Real Gaussian with `B = D = E = 0`.
    pub fn real(a: f64, c: f64) -> Result<Self> {
        Self::new(a, 0.0, c, 0.0, 0.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn e(&self) -> f64 {
        self.e
    }

    /// Evaluates ρ_G(x, y).
    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let u = x + y + self.e / (2.0 * self.c);
        let v = x - y;
        let re = self.a * v * v + self.c * u * u;
        let im = self.b * (x * x - y * y) + self.d * v;
        let pref = 2.0 * (self.c / PI).sqrt() * (-re).exp();
        Complex64::from_polar(pref, -im)
    }

    /// ln ρ_G(x, y), finite where `eval` would underflow.
    pub fn log_eval(&self, x: f64, y: f64) -> Complex64 {
        let u = x + y + self.e / (2.0 * self.c);
        let v = x - y;
        let re = self.a * v * v + self.c * u * u;
        let im = self.b * (x * x - y * y) + self.d * v;
        Complex64::new((2.0 * (self.c / PI).sqrt()).ln() - re, -im)
    }

    /// Center and width of the diagonal ρ_G(x, x) ∝ exp(-4C(x + E/4C)²).
    pub fn diagonal_envelope(&self) -> (f64, f64) {
        (-self.e / (4.0 * self.c), 1.0 / (8.0 * self.c).sqrt())
    }
}

/// Coefficients of the self-adjoint quadratic factor
/// `α₂(x-y)² + iβ₂(x²-y²) + γ₂(x+y)² + α₁(x+y) + iβ₁(x-y) + γ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolyCoeffs {
    pub alpha2: f64,
    pub beta2: f64,
    pub gamma2: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma0: f64,
}

impl PolyCoeffs {
    pub fn constant(gamma0: f64) -> Self {
        Self { gamma0, ..Self::default() }
    }

    pub fn linear(alpha1: f64, beta1: f64, gamma0: f64) -> Self {
        Self { alpha1, beta1, gamma0, ..Self::default() }
    }

    /// `4xy + γ₀`, i.e. `α₂ = -1, γ₂ = 1`.
    pub fn four_xy_plus(gamma0: f64) -> Self {
        Self { alpha2: -1.0, gamma2: 1.0, gamma0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("polynomial coefficients must be finite".into()))
        }
    }

    /// `[α₂, β₂, γ₂, α₁, β₁, γ₀]`
    pub fn as_array(&self) -> [f64; 6] {
        [self.alpha2, self.beta2, self.gamma2, self.alpha1, self.beta1, self.gamma0]
    }

    pub fn is_linear(&self) -> bool {
        self.alpha2 == 0.0 && self.beta2 == 0.0 && self.gamma2 == 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        let [alpha2, beta2, gamma2, alpha1, beta1, gamma0] = self.as_array().map(|v| v * s);
        Self { alpha2, beta2, gamma2, alpha1, beta1, gamma0 }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let re = self.alpha2 * (x - y).powi(2) + self.gamma2 * (x + y).powi(2) + self.alpha1 * (x + y) + self.gamma0;
        let im = self.beta2 * (x * x - y * y) + self.beta1 * (x - y);
        Complex64::new(re, im)
    }
}

impl Add for PolyCoeffs {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            alpha2: self.alpha2 + o.alpha2,
            beta2: self.beta2 + o.beta2,
            gamma2: self.gamma2 + o.gamma2,
            alpha1: self.alpha1 + o.alpha1,
            beta1: self.beta1 + o.beta1,
            gamma0: self.gamma0 + o.gamma0,
        }
    }
}

pub type KernelFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

/// A pointwise-evaluable Hermitian kernel with a Gaussian-like envelope of
/// width `envelope` around `center`.
#[derive(Clone)]
pub struct GenericKernel {
    pub eval: KernelFn,
    pub envelope: f64,
    pub center: f64,
}

impl fmt::Debug for GenericKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericKernel")
            .field("envelope", &self.envelope)
            .field("center", &self.center)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    GaussPoly { gauss: GaussianParams, poly: PolyCoeffs, normalize: bool },
    Generic(GenericKernel),
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    kind: KernelKind,
    hbar: f64,
}

impl KernelSpec {
    pub fn gauss_poly(gauss: GaussianParams, poly: PolyCoeffs, normalize: bool) -> Result<Self> {
        poly.validate()?;
        Ok(Self { kind: KernelKind::GaussPoly { gauss, poly, normalize }, hbar: 1.0 })
    }

    /// The pure Gaussian ρ_G (unit trace by construction).
    pub fn gaussian(gauss: GaussianParams) -> Self {
        Self {
            kind: KernelKind::GaussPoly { gauss, poly: PolyCoeffs::constant(1.0), normalize: false },
            hbar: 1.0,
        }
    }

    pub fn generic<F>(eval: F, envelope: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Send + Sync + 'static,
    {
        if !(envelope > 0.0 && envelope.is_finite()) {
            return Err(Error::InvalidParameter(format!("envelope must be positive, got {envelope}")));
        }
        Ok(Self {
            kind: KernelKind::Generic(GenericKernel { eval: Arc::new(eval), envelope, center: 0.0 }),
            hbar: 1.0,
        })
    }

    /// Moves the envelope center of a generic kernel (no effect on GaussPoly).
    pub fn with_center(mut self, center: f64) -> Self {
        if let KernelKind::Generic(g) = &mut self.kind {
            g.center = center;
        }
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Gaussian and polynomial parts when this is a GaussPoly kernel.
    pub fn gauss_poly_parts(&self) -> Option<(GaussianParams, PolyCoeffs, bool)> {
        match &self.kind {
            KernelKind::GaussPoly { gauss, poly, normalize } => Some((*gauss, *poly, *normalize)),
            KernelKind::Generic(_) => None,
        }
    }

    /// Multiplier applied to the raw `p·ρ_G` product: `1/N` when normalization
    /// is requested and `N` is non-singular, otherwise 1.
    pub fn scale_factor(&self) -> f64 {
        match &self.kind {
            KernelKind::GaussPoly { gauss, poly, normalize: true } => match normalization_n(gauss, poly) {
                Ok(n) => 1.0 / n,
                Err(_) => 1.0,
            },
            _ => 1.0,
        }
    }

    /// True when normalization was requested but `N` vanished, so the raw
    /// kernel is used and trace-based quantities are undefined.
    pub fn normalization_singular(&self) -> bool {
        matches!(&self.kind, KernelKind::GaussPoly { gauss, poly, normalize: true }
            if normalization_n(gauss, poly).is_err())
    }

    /// Center and width of the diagonal envelope, used to place grids.
    pub fn envelope(&self) -> (f64, f64) {
        match &self.kind {
            KernelKind::GaussPoly { gauss, .. } => gauss.diagonal_envelope(),
            KernelKind::Generic(g) => (g.center, g.envelope),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<Complex64> {
        eval_kernel(self, x, y)
    }
}

/// ρ(x, y), including the `2√(C/π)` prefactor and any `1/N` normalization.
pub fn eval_kernel(spec: &KernelSpec, x: f64, y: f64) -> Result<Complex64> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::EvaluationDomain { x, y });
    }
    let v = match &spec.kind {
        KernelKind::GaussPoly { gauss, poly, .. } => poly.eval(x, y) * gauss.eval(x, y) * spec.scale_factor(),
        KernelKind::Generic(g) => (g.eval)(x, y),
    };
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::EvaluationDomain { x, y })
    }
}

/// `N = γ₀ + (γ₂ - α₁E)/(2C) + γ₂E²/(4C²)`, the trace of `p·ρ_G`.
pub fn normalization_n(g: &GaussianParams, p: &PolyCoeffs) -> Result<f64> {
    let (c, e) = (g.c(), g.e());
    let n = p.gamma0 + (p.gamma2 - p.alpha1 * e) / (2.0 * c) + p.gamma2 * e * e / (4.0 * c * c);
    if n.abs() < NORMALIZATION_FLOOR {
        Err(Error::NormalizationSingular { n })
    } else {
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceReport {
    pub value: f64,
    pub imag_residue: f64,
    pub error_estimate: f64,
    pub nodes: usize,
}

/// `Tr ρ̂ = ∫ ρ(x, x) dx` by Gauss–Hermite quadrature on the diagonal envelope.
pub fn trace(spec: &KernelSpec) -> Result<TraceReport> {
    let (center, scale) = match &spec.kind {
        // ρ(x,x) ∝ poly·exp(-4C(x+s)²): exact once the rule covers degree 2
        KernelKind::GaussPoly { gauss, .. } => (-gauss.e() / (4.0 * gauss.c()), 1.0 / (2.0 * gauss.c().sqrt())),
        KernelKind::Generic(g) => (g.center, g.envelope),
    };
    let integrate = |m: usize| -> Result<Complex64> {
        let grid = QuadratureGrid::new(m, center, scale)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
            acc += w * eval_kernel(spec, x, x)?;
        }
        Ok(acc)
    };
    let mut prev = integrate(16)?;
    let mut m = 32;
    loop {
        let cur = integrate(m)?;
        let err = (cur - prev).norm();
        if err <= 1e-13 * cur.norm().max(1.0) || m >= 256 {
            if err > 1e-8 * cur.norm().max(1.0) {
                return Err(Error::TraceQuadratureFailure { estimate: cur.re, error: err });
            }
            return Ok(TraceReport { value: cur.re, imag_residue: cur.im.abs(), error_estimate: err, nodes: m });
        }
        prev = cur;
        m *= 2;
    }
}

/// Largest `|ρ(x,y) - ρ(y,x)*|` relative to `max|ρ|` over the given points.
pub fn hermiticity_defect(spec: &KernelSpec, points: &[(f64, f64)]) -> Result<f64> {
    let mut worst = 0.0_f64;
    let mut peak = 0.0_f64;
    for &(x, y) in points {
        let a = eval_kernel(spec, x, y)?;
        let b = eval_kernel(spec, y, x)?;
        worst = worst.max((a - b.conj()).norm());
        peak = peak.max(a.norm());
    }
    Ok(if peak > 0.0 { worst / peak } else { worst })
}
