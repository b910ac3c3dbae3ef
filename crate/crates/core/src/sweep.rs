//! One-parameter sweeps: per-point moments, e_k, Θ_k and verdicts, plus the
//! H_k sets as unions of parameter intervals.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::band::{build_band_matrix, moments_band, truncation_dim, DEFAULT_TRUNCATION_TOL};
use crate::certify::{certify, rs_uncertainty, CertifyOptions, Engine, Verdict, Witness};
use crate::error::{Error, Result};
use crate::kernel::{GaussianParams, KernelSpec, PolyCoeffs};
use crate::newton::{linear_entropy, newton_ek, theta_profile, MomentVector, SymPolyVector};
use crate::nystrom::{discretize, moments_nystrom};
use crate::spectrum::derive_spectrum;

pub const CSV_VERSION: u32 = 1;
/// Interval endpoints are bisected to this parameter resolution.
pub const BISECTION_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    A,
    B,
    C,
    D,
    E,
    /// 1/A.
    InvA,
    /// √C.
    SqrtC,
    Alpha2,
    Beta2,
    Gamma2,
    Alpha1,
    Beta1,
    Gamma0,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::A => "A",
            SweepParam::B => "B",
            SweepParam::C => "C",
            SweepParam::D => "D",
            SweepParam::E => "E",
            SweepParam::InvA => "invA",
            SweepParam::SqrtC => "sqrtC",
            SweepParam::Alpha2 => "alpha2",
            SweepParam::Beta2 => "beta2",
            SweepParam::Gamma2 => "gamma2",
            SweepParam::Alpha1 => "alpha1",
            SweepParam::Beta1 => "beta1",
            SweepParam::Gamma0 => "gamma0",
        }
    }

    /// Gaussian and polynomial parts with this parameter set to `v`.
    pub fn apply(&self, g: &GaussianParams, p: &PolyCoeffs, v: f64) -> Result<(GaussianParams, PolyCoeffs)> {
        let (mut a, mut b, mut c, mut d, mut e) = (g.a(), g.b(), g.c(), g.d(), g.e());
        let mut p = *p;
        match self {
            SweepParam::A => a = v,
            SweepParam::B => b = v,
            SweepParam::C => c = v,
            SweepParam::D => d = v,
            SweepParam::E => e = v,
            SweepParam::InvA => a = 1.0 / v,
            SweepParam::SqrtC => c = v * v,
            SweepParam::Alpha2 => p.alpha2 = v,
            SweepParam::Beta2 => p.beta2 = v,
            SweepParam::Gamma2 => p.gamma2 = v,
            SweepParam::Alpha1 => p.alpha1 = v,
            SweepParam::Beta1 => p.beta1 = v,
            SweepParam::Gamma0 => p.gamma0 = v,
        }
        Ok((GaussianParams::new(a, b, c, d, e)?, p))
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A" => SweepParam::A,
            "B" => SweepParam::B,
            "C" => SweepParam::C,
            "D" => SweepParam::D,
            "E" => SweepParam::E,
            "invA" | "1/A" => SweepParam::InvA,
            "sqrtC" => SweepParam::SqrtC,
            "alpha2" => SweepParam::Alpha2,
            "beta2" => SweepParam::Beta2,
            "gamma2" => SweepParam::Gamma2,
            "alpha1" => SweepParam::Alpha1,
            "beta1" => SweepParam::Beta1,
            "gamma0" => SweepParam::Gamma0,
            _ => return Err(Error::Config(format!("unknown sweep parameter '{s}'"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub gauss: GaussianParams,
    pub poly: PolyCoeffs,
    pub normalize: bool,
    pub hbar: f64,
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub depth: usize,
    pub engine: Engine,
    pub tol: f64,
    pub grid_size: Option<usize>,
    /// Run the Nyström eigenvalue oracle at every grid point.
    pub oracle: bool,
    /// Refine H_k and verdict boundaries by bisection.
    pub refine: bool,
    /// Recorded in the CSV header; the sweep itself draws no random numbers.
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(gauss: GaussianParams, poly: PolyCoeffs, normalize: bool, param: SweepParam, lo: f64, hi: f64, count: usize, depth: usize) -> Self {
        Self {
            gauss,
            poly,
            normalize,
            hbar: 1.0,
            param,
            lo,
            hi,
            count,
            depth,
            engine: Engine::Auto,
            tol: 0.0,
            grid_size: None,
            oracle: false,
            refine: true,
            seed: 0,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        (0..n).map(|i| if i + 1 == n { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64 }).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("sweep range needs lo < hi, got {}:{}", self.lo, self.hi)));
        }
        if self.count < 2 {
            return Err(Error::Config("sweep needs at least 2 points".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        let positive_only = matches!(self.param, SweepParam::A | SweepParam::C | SweepParam::InvA | SweepParam::SqrtC);
        if positive_only && self.lo <= 0.0 {
            return Err(Error::Config(format!("{} must stay positive across the range", self.param.name())));
        }
        for v in [self.lo, self.hi] {
            self.spec_at(v)?;
        }
        Ok(())
    }

    pub fn spec_at(&self, v: f64) -> Result<KernelSpec> {
        let (g, p) = self.param.apply(&self.gauss, &self.poly, v)?;
        KernelSpec::gauss_poly(g, p, self.normalize)?.with_hbar(self.hbar)
    }

    fn certify_options(&self) -> CertifyOptions {
        CertifyOptions { depth: self.depth, engine: self.engine, tol: self.tol, grid_size: self.grid_size, truncation_tol: DEFAULT_TRUNCATION_TOL, oracle: self.oracle }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub moments: Option<MomentVector>,
    pub ek: Option<SymPolyVector>,
    pub theta: Vec<bool>,
    pub z: Option<f64>,
    pub linear_entropy: Option<f64>,
    pub verdict: Option<Verdict>,
    pub oracle_min: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn verdict_label(&self) -> String {
        match &self.verdict {
            Some(Verdict::PositiveUpTo { depth, .. }) => format!("PositiveUpTo({depth})"),
            Some(Verdict::NonPositive(w)) => match w {
                Witness::NegativeEk { k, .. } => format!("NonPositive(NegativeEk:{k})"),
                other => format!("NonPositive({})", other.kind()),
            },
            None => "EngineFailure".into(),
        }
    }
}

pub type IntervalSet = Vec<(f64, f64)>;

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// H_1 … H_K, each a sorted union of closed intervals, nested by
    /// construction.
    pub h_sets: Vec<IntervalSet>,
    /// Points where certify returned PositiveUpTo.
    pub positive_set: IntervalSet,
    /// Parameter values where M₂ crosses 1.
    pub m2_crossings: Vec<f64>,
}

/// Moments and e_k at a parameter value by the requested route.
pub fn moments_at(spec: &KernelSpec, depth: usize, engine: Engine, grid: Option<usize>) -> Result<(MomentVector, SymPolyVector)> {
    let m = match (spec.gauss_poly_parts(), engine) {
        (Some((g, p, normalize)), e) if e != Engine::Nystrom => {
            let dim = truncation_dim(derive_spectrum(&g).eps, DEFAULT_TRUNCATION_TOL);
            moments_band(&build_band_matrix(&g, &p, dim, normalize)?, depth)
        }
        _ => moments_nystrom(&discretize(spec, grid, None)?, depth)?.moments,
    };
    let e = newton_ek(&m);
    Ok((m, e))
}

fn theta_at(s: &SweepSpec, v: f64) -> Option<Vec<bool>> {
    let spec = s.spec_at(v).ok()?;
    let (_, e) = moments_at(&spec, s.depth, s.engine, s.grid_size).ok()?;
    Some(theta_profile(&e, s.tol).theta)
}

fn positive_at(s: &SweepSpec, v: f64) -> Option<bool> {
    let spec = s.spec_at(v).ok()?;
    certify(&spec, &s.certify_options()).ok().map(|c| c.verdict.is_positive())
}

fn m2_at(s: &SweepSpec, v: f64) -> Option<f64> {
    let spec = s.spec_at(v).ok()?;
    moments_at(&spec, 2, s.engine, s.grid_size).ok().map(|(m, _)| m.value(2))
}

fn row_at(s: &SweepSpec, v: f64) -> SweepRow {
    let mut row = SweepRow { value: v, moments: None, ek: None, theta: vec![], z: None, linear_entropy: None, verdict: None, oracle_min: None, error: None };
    let spec = match s.spec_at(v) {
        Ok(x) => x,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    match moments_at(&spec, s.depth, s.engine, s.grid_size) {
        Ok((m, e)) => {
            row.theta = theta_profile(&e, s.tol).theta;
            row.linear_entropy = linear_entropy(&m).ok();
            row.moments = Some(m);
            row.ek = Some(e);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if s.normalize && !spec.normalization_singular() {
        row.z = rs_uncertainty(&spec).ok().map(|r| r.z);
    }
    match certify(&spec, &s.certify_options()) {
        Ok(c) => {
            row.oracle_min = c.provenance.oracle_min_eigenvalue;
            row.verdict = Some(c.verdict);
        }
        Err(e) => {
            row.error.get_or_insert(e.to_string());
        }
    }
    row
}

/// Boundary between `out` (predicate false) and `inside` (true).
fn bisect(mut out: f64, mut inside: f64, pred: &(dyn Fn(f64) -> Option<bool> + Sync)) -> f64 {
    while (inside - out).abs() > BISECTION_RESOLUTION {
        let mid = 0.5 * (out + inside);
        match pred(mid) {
            Some(true) => inside = mid,
            Some(false) => out = mid,
            None => break,
        }
    }
    0.5 * (out + inside)
}

/// Runs of true flags become intervals; interior ends are bisected.
fn intervals(values: &[f64], flags: &[bool], refine: bool, pred: &(dyn Fn(f64) -> Option<bool> + Sync)) -> IntervalSet {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 0;
    while i < n {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && flags[i + 1] {
            i += 1;
        }
        let lo = if start == 0 { values[0] } else if refine { bisect(values[start - 1], values[start], pred) } else { values[start] };
        let hi = if i + 1 == n { values[n - 1] } else if refine { bisect(values[i + 1], values[i], pred) } else { values[i] };
        out.push((lo, hi.max(lo)));
        i += 1;
    }
    out
}

/// Intersection of two sorted interval unions.
pub fn intersect(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if lo <= hi {
                out.push((lo, hi));
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// True when every interval of `inner` lies inside some interval of `outer`.
pub fn is_subset(inner: &IntervalSet, outer: &IntervalSet) -> bool {
    inner.iter().all(|&(a, b)| outer.iter().any(|&(c, d)| c <= a && b <= d))
}

pub fn run_sweep(s: &SweepSpec) -> Result<SweepResult> {
    s.validate()?;
    let values = s.values();
    let rows: Vec<SweepRow> = values.par_iter().map(|&v| row_at(s, v)).collect();

    let k_max = s.depth;
    let raw: Vec<IntervalSet> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let flags: Vec<bool> = rows.iter().map(|r| r.theta.get(k - 1).copied().unwrap_or(false)).collect();
            let pred = move |v: f64| theta_at(s, v).map(|t| t[k - 1]);
            intervals(&values, &flags, s.refine, &pred)
        })
        .collect();
    let mut h_sets: Vec<IntervalSet> = Vec::with_capacity(k_max);
    for (k, set) in raw.into_iter().enumerate() {
        let nested = if k == 0 { set } else { intersect(&set, &h_sets[k - 1]) };
        h_sets.push(nested);
    }

    let pos_flags: Vec<bool> = rows.iter().map(|r| r.verdict.as_ref().is_some_and(|v| v.is_positive())).collect();
    let positive_set = intervals(&values, &pos_flags, s.refine, &|v| positive_at(s, v));

    let mut m2_crossings = Vec::new();
    for w in rows.windows(2) {
        if let (Some(a), Some(b)) = (&w[0].moments, &w[1].moments) {
            if a.len() >= 2 && b.len() >= 2 && (a.value(2) - 1.0).signum() != (b.value(2) - 1.0).signum() {
                let below_a = a.value(2) <= 1.0;
                let pred = move |v: f64| m2_at(s, v).map(|m| (m <= 1.0) == below_a);
                let x = if s.refine { bisect(w[1].value, w[0].value, &pred) } else { 0.5 * (w[0].value + w[1].value) };
                m2_crossings.push(x);
            }
        }
    }
    Ok(SweepResult { spec: s.clone(), rows, h_sets, positive_set, m2_crossings })
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:e}"),
        _ => "NaN".into(),
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn set_text(set: &IntervalSet) -> String {
    if set.is_empty() {
        return "empty".into();
    }
    set.iter().map(|(a, b)| format!("[{a:.4}, {b:.4}]")).collect::<Vec<_>>().join(" U ")
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let s = &self.spec;
        let k = s.depth;
        writeln!(
            out,
            "# kpos-sweep v{CSV_VERSION} tool={} param={} depth={k} engine={:?} normalize={} seed={}",
            env!("CARGO_PKG_VERSION"),
            s.param.name(),
            s.engine,
            s.normalize,
            s.seed
        )?;
        let mut header = vec![s.param.name().to_string()];
        for prefix in ["M", "M_err", "e", "e_err", "e_kfact", "theta"] {
            header.extend((1..=k).map(|i| format!("{prefix}_{i}")));
        }
        header.extend(["Z", "linear_entropy", "oracle_min", "verdict"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.rows {
            let mut f = vec![format!("{:e}", r.value)];
            let mv = |g: &dyn Fn(usize) -> Option<f64>| (1..=k).map(|i| num(g(i))).collect::<Vec<_>>();
            f.extend(mv(&|i| r.moments.as_ref().map(|m| m.value(i))));
            f.extend(mv(&|i| r.moments.as_ref().map(|m| m.error(i))));
            f.extend(mv(&|i| r.ek.as_ref().map(|e| e.value(i))));
            f.extend(mv(&|i| r.ek.as_ref().map(|e| e.error(i))));
            f.extend(mv(&|i| r.ek.as_ref().map(|e| e.value(i) * factorial(i))));
            f.extend((1..=k).map(|i| r.theta.get(i - 1).map_or("NaN".to_string(), |&b| (b as u8).to_string())));
            f.push(num(r.z));
            f.push(num(r.linear_entropy));
            f.push(num(r.oracle_min));
            f.push(r.verdict_label());
            writeln!(out, "{}", f.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let sp = &self.spec;
        let _ = writeln!(s, "sweep {} over [{}, {}] with {} points, depth {}", sp.param.name(), sp.lo, sp.hi, sp.count, sp.depth);
        for (k, set) in self.h_sets.iter().enumerate() {
            let _ = writeln!(s, "H_{}: {}", k + 1, set_text(set));
        }
        let _ = writeln!(s, "verdict PositiveUpTo: {}", set_text(&self.positive_set));
        let crossings: Vec<String> = self.m2_crossings.iter().map(|x| format!("{x:.4}")).collect();
        let _ = writeln!(s, "M_2 = 1 crossings: {}", if crossings.is_empty() { "none".into() } else { crossings.join(", ") });
        let failed = self.rows.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            let _ = writeln!(s, "rows with engine failures: {failed}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_ops() {
        let a = vec![(0.0, 2.0), (3.0, 5.0)];
        let b = vec![(1.0, 4.0)];
        assert_eq!(intersect(&a, &b), vec![(1.0, 2.0), (3.0, 4.0)]);
        assert!(is_subset(&intersect(&a, &b), &a));
        assert!(!is_subset(&a, &b));
    }

    #[test]
    fn runs_become_intervals() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        let f = [false, true, true, false, true];
        let set = intervals(&v, &f, true, &|x| Some((0.5..=2.5).contains(&x) || x >= 3.5));
        assert_eq!(set.len(), 2);
        assert!((set[0].0 - 0.5).abs() < 2e-3 && (set[0].1 - 2.5).abs() < 2e-3);
        assert!((set[1].0 - 3.5).abs() < 2e-3 && set[1].1 == 4.0);
    }

    #[test]
    fn validation() {
        let g = GaussianParams::real(4.0, 1.0).unwrap();
        let p = PolyCoeffs::constant(1.0);
        assert!(SweepSpec::new(g, p, true, SweepParam::A, 1.0, 0.5, 10, 4).validate().is_err());
        assert!(SweepSpec::new(g, p, true, SweepParam::A, -1.0, 2.0, 10, 4).validate().is_err());
        assert!(SweepSpec::new(g, p, true, SweepParam::A, 1.0, 2.0, 1, 4).validate().is_err());
        assert!(SweepSpec::new(g, p, true, SweepParam::Gamma2, -1.0, 2.0, 5, 4).validate().is_ok());
        assert!("bogus".parse::<SweepParam>().is_err());
        assert_eq!("1/A".parse::<SweepParam>().unwrap(), SweepParam::InvA);
    }

    #[test]
    fn gaussian_sweep_over_a() {
        let g = GaussianParams::real(1.0, 1.0).unwrap();
        let s = SweepSpec::new(g, PolyCoeffs::constant(1.0), true, SweepParam::A, 0.5, 2.0, 16, 6);
        let r = run_sweep(&s).unwrap();
        // positive iff A ≥ C = 1
        let h = r.h_sets.last().unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].0 - 1.0).abs() < 2e-3 && h[0].1 == 2.0, "{h:?}");
        for k in 1..r.h_sets.len() {
            assert!(is_subset(&r.h_sets[k], &r.h_sets[k - 1]));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        r.write_csv(&mut a).unwrap();
        run_sweep(&s).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 2 + 16);
        assert!(text.lines().nth(1).unwrap().starts_with("A,M_1,"));
    }
}
