//! Moments to elementary symmetric polynomials, and the Θ_k conditions.

use crate::dd::{DoubleDouble, DD_EPS};
use crate::error::{Error, Result};

/// Largest order accepted by the determinant cross-check.
pub const MAX_DETERMINANT_ORDER: usize = 12;

/// Partial sums this much larger than the result flag the entry as cancelling.
const CANCELLATION_RATIO: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    Band { dim: usize },
    Nystrom { grid: usize },
    ClosedForm,
    Supplied,
}

impl std::fmt::Display for MomentSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentSource::Band { dim } => write!(f, "band(N={dim})"),
            MomentSource::Nystrom { grid } => write!(f, "nystrom(m={grid})"),
            MomentSource::ClosedForm => write!(f, "closed-form"),
            MomentSource::Supplied => write!(f, "supplied"),
        }
    }
}

/// M₁…M_K with absolute error estimates. Indices are 1-based in accessors.
#[derive(Debug, Clone)]
pub struct MomentVector {
    values: Vec<DoubleDouble>,
    errors: Vec<f64>,
    source: MomentSource,
}

impl MomentVector {
    pub fn new(values: Vec<DoubleDouble>, errors: Vec<f64>, source: MomentSource) -> Self {
        assert_eq!(values.len(), errors.len());
        Self { values, errors, source }
    }

    pub fn from_f64(values: &[f64], errors: &[f64], source: MomentSource) -> Self {
        Self::new(values.iter().map(|&v| DoubleDouble::from_f64(v)).collect(), errors.to_vec(), source)
    }

    /// Exact moments Σλᵏ of a finite spectrum, accumulated in double-double.
    pub fn from_spectrum(lambdas: &[f64], k_max: usize) -> Self {
        let mut values = vec![DoubleDouble::ZERO; k_max];
        for &l in lambdas {
            let l = DoubleDouble::from_f64(l);
            let mut p = DoubleDouble::ONE;
            for v in values.iter_mut() {
                p *= l;
                *v += p;
            }
        }
        let errors = (1..=k_max)
            .map(|k| {
                let s: f64 = lambdas.iter().map(|l| l.abs().powi(k as i32)).sum();
                (k + lambdas.len()) as f64 * DD_EPS * s
            })
            .collect();
        Self::new(values, errors, MomentSource::Supplied)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1].to_f64()
    }

    pub fn value_dd(&self, k: usize) -> DoubleDouble {
        self.values[k - 1]
    }

    pub fn error(&self, k: usize) -> f64 {
        self.errors[k - 1]
    }

    pub fn values(&self) -> &[DoubleDouble] {
        &self.values
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64()).collect()
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self::new(self.values[..k].to_vec(), self.errors[..k].to_vec(), self.source)
    }
}

/// e₁…e_K (e₀ = 1 implicit) with propagated errors.
#[derive(Debug, Clone)]
pub struct SymPolyVector {
    values: Vec<DoubleDouble>,
    errors: Vec<f64>,
    cancelling: Vec<bool>,
}

impl SymPolyVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.values[k - 1].to_f64()
        }
    }

    pub fn value_dd(&self, k: usize) -> DoubleDouble {
        if k == 0 {
            DoubleDouble::ONE
        } else {
            self.values[k - 1]
        }
    }

    pub fn error(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.errors[k - 1]
        }
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64()).collect()
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Set when the recursion's partial sums exceed |e_k| by more than 10⁶.
    pub fn is_cancelling(&self, k: usize) -> bool {
        self.cancelling[k - 1]
    }

    /// e_k < −max(tol, 3·err_k): a certified negative value.
    pub fn is_certified_negative(&self, k: usize, tol: f64) -> bool {
        self.value_dd(k).to_f64() < -(tol.max(3.0 * self.error(k)))
    }

    /// First certified negative index, if any.
    pub fn first_negative(&self, tol: f64) -> Option<usize> {
        (1..=self.len()).find(|&k| self.is_certified_negative(k, tol))
    }
}

/// k·e_k = Σ_{i=1}^{k} (−1)^{i−1} e_{k−i} M_i, in double-double.
///
/// The error of e_k combines the sensitivity ∂e_k/∂M_i = (−1)^{i−1} e_{k−i}/i
/// applied to err(M_i) (using |e_{k−i}| + err(e_{k−i}) for second-order
/// slack) with a forward bound on the double-double rounding.
pub fn newton_ek(m: &MomentVector) -> SymPolyVector {
    let kk = m.len();
    let mut e = vec![DoubleDouble::ONE];
    let mut err = vec![0.0_f64];
    let mut rnd = vec![0.0_f64];
    let mut cancelling = Vec::with_capacity(kk);
    for k in 1..=kk {
        let mut acc = DoubleDouble::ZERO;
        let mut mag = 0.0;
        let mut sens = 0.0;
        let mut r = 0.0;
        for i in 1..=k {
            let term = e[k - i] * m.value_dd(i);
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
            let ek = e[k - i].to_f64().abs();
            let mi = m.value(i).abs();
            mag += ek * mi;
            sens += (ek + err[k - i]) * m.error(i) / i as f64;
            r += rnd[k - i] * mi;
        }
        let kf = k as f64;
        let val = acc / DoubleDouble::from_f64(kf);
        let r = (r + (kf + 2.0) * DD_EPS * mag) / kf;
        cancelling.push(mag / kf > CANCELLATION_RATIO * val.to_f64().abs());
        e.push(val);
        err.push(sens + r);
        rnd.push(r);
    }
    SymPolyVector { values: e[1..].to_vec(), errors: err[1..].to_vec(), cancelling }
}

/// e_k as (1/k!)·det of the Newton matrix with rows (M_i, …, M_1, i, 0, …).
pub fn newton_ek_determinant(m: &MomentVector, k: usize) -> Result<f64> {
    if k > MAX_DETERMINANT_ORDER {
        return Err(Error::DeterminantOrder { k, max: MAX_DETERMINANT_ORDER });
    }
    if k == 0 {
        return Ok(1.0);
    }
    if k > m.len() {
        return Err(Error::InvalidParameter(format!("order {k} exceeds {} moments", m.len())));
    }
    let mut a = vec![vec![DoubleDouble::ZERO; k]; k];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if j <= i {
                *v = m.value_dd(i - j + 1);
            } else if j == i + 1 {
                *v = DoubleDouble::from_f64((i + 1) as f64);
            }
        }
    }
    let mut det = DoubleDouble::ONE;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if a[piv][col].to_f64() == 0.0 {
            return Ok(0.0);
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..k {
                let t = f * a[col][c];
                a[r][c] -= t;
            }
        }
    }
    let mut fact = DoubleDouble::ONE;
    for i in 2..=k {
        fact = fact.mul_f64(i as f64);
    }
    Ok((det / fact).to_f64())
}

/// Θ_k = 1 iff e_i ≥ −max(tol, err_i) for every i ≤ k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaProfile {
    pub k_max: usize,
    pub theta: Vec<bool>,
}

impl ThetaProfile {
    /// Largest k with Θ_k = 1 (0 when e₁ already fails).
    pub fn depth(&self) -> usize {
        self.theta.iter().take_while(|&&b| b).count()
    }

    pub fn theta(&self, k: usize) -> bool {
        self.theta[k - 1]
    }

    pub fn all_ones(&self) -> bool {
        self.depth() == self.k_max
    }
}

pub fn theta_profile(e: &SymPolyVector, tol: f64) -> ThetaProfile {
    let mut ok = true;
    let theta = (1..=e.len())
        .map(|k| {
            ok = ok && e.value(k) >= -(tol.max(e.error(k)));
            ok
        })
        .collect();
    ThetaProfile { k_max: e.len(), theta }
}

/// 1 − M₂, defined only for unit-trace input.
pub fn linear_entropy(m: &MomentVector) -> Result<f64> {
    if m.len() < 2 {
        return Err(Error::Undefined("linear entropy needs M₂".into()));
    }
    if (m.value(1) - 1.0).abs() > 1e-8 + m.error(1) {
        return Err(Error::Undefined(format!("trace is {} rather than 1", m.value(1))));
    }
    Ok(1.0 - m.value(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub s1: f64,
    /// Orders with |e_k| > S₁ᵏ/k! + err_k.
    pub violations: Vec<usize>,
    /// max_k |e_k| / (S₁ᵏ/k! + err_k).
    pub worst_ratio: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks |e_k| ≤ S₁ᵏ/k! within propagated error.
pub fn ek_bound_check(e: &SymPolyVector, s1: f64) -> BoundCheck {
    let mut bound = 1.0;
    let mut violations = Vec::new();
    let mut worst = 0.0_f64;
    for k in 1..=e.len() {
        bound *= s1 / k as f64;
        let allowed = bound * (1.0 + 1e-12) + e.error(k);
        let ratio = e.value(k).abs() / allowed;
        if ratio > 1.0 {
            violations.push(k);
        }
        if ratio.is_finite() {
            worst = worst.max(ratio);
        }
    }
    BoundCheck { s1, violations, worst_ratio: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_ek(l: &[f64], k: usize) -> f64 {
        // DP over the generating polynomial Π(1 + λ t)
        let mut c = vec![0.0; l.len() + 1];
        c[0] = 1.0;
        for &x in l {
            for j in (1..=l.len()).rev() {
                c[j] += c[j - 1] * x;
            }
        }
        c.get(k).copied().unwrap_or(0.0)
    }

    #[test]
    fn pure_state() {
        let m = MomentVector::from_f64(&[1.0; 10], &[0.0; 10], MomentSource::Supplied);
        let e = newton_ek(&m);
        assert_eq!(e.value(1), 1.0);
        for k in 2..=10 {
            assert!(e.value(k).abs() < 1e-30);
        }
    }

    #[test]
    fn gaussian_e2() {
        let m = MomentVector::from_f64(&[1.0, 0.5], &[0.0; 2], MomentSource::ClosedForm);
        assert_relative_eq!(newton_ek(&m).value(2), 0.25);
        assert_relative_eq!(linear_entropy(&m).unwrap(), 0.5);
    }

    #[test]
    fn two_minus_one() {
        let m = MomentVector::from_spectrum(&[2.0, -1.0], 6);
        assert_eq!(m.values_f64()[..4], [1.0, 5.0, 7.0, 17.0]);
        let e = newton_ek(&m);
        assert_relative_eq!(e.value(2), -2.0);
        assert_eq!(e.first_negative(0.0), Some(2));
        let b = ek_bound_check(&e, 3.0);
        assert!(b.holds());
        assert!(linear_entropy(&m).is_ok());
        assert_relative_eq!(linear_entropy(&m).unwrap(), -4.0);
    }

    #[test]
    fn determinant_matches_recursion() {
        let m = MomentVector::from_spectrum(&[0.4, 0.3, 0.2, 0.1, -0.05, 0.05], 12);
        let e = newton_ek(&m);
        assert_eq!(newton_ek_determinant(&m, 1).unwrap(), m.value(1));
        for k in 1..=6 {
            let d = newton_ek_determinant(&m, k).unwrap();
            assert_relative_eq!(d, e.value(k), max_relative = 1e-14);
        }
        assert!(matches!(newton_ek_determinant(&m, 13), Err(Error::DeterminantOrder { .. })));
    }

    #[test]
    fn theta_monotone_after_negative_e2() {
        let m = MomentVector::from_spectrum(&[2.0, -1.0, 0.5, 0.25], 8);
        let t = theta_profile(&newton_ek(&m), 0.0);
        assert!(t.theta(1));
        assert!(t.theta[1..].iter().all(|&b| !b));
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn corrupted_m2_violates_bound() {
        let l: Vec<f64> = (0..20).map(|n| 0.5 * 0.5f64.powi(n)).collect();
        let mut m = MomentVector::from_spectrum(&l, 10).values_f64();
        m[1] += 1.0;
        let e = newton_ek(&MomentVector::from_f64(&m, &[0.0; 10], MomentSource::Supplied));
        assert!(!ek_bound_check(&e, 1.0).holds());
    }

    #[test]
    fn undefined_entropy_for_unnormalized() {
        let m = MomentVector::from_f64(&[2.0, 1.0], &[0.0; 2], MomentSource::Supplied);
        assert!(matches!(linear_entropy(&m), Err(Error::Undefined(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matches_subset_sums(l in prop::collection::vec(-2.0f64..2.0, 1..=12)) {
                let k = l.len();
                let e = newton_ek(&MomentVector::from_spectrum(&l, k));
                for j in 1..=k {
                    let b = brute_ek(&l, j);
                    if b.abs() > 1e-30 {
                        prop_assert!((e.value(j) - b).abs() <= 1e-9 * b.abs().max(1e-12), "k={} {} vs {}", j, e.value(j), b);
                    }
                }
            }

            #[test]
            fn finite_spectrum_sign(l in prop::collection::vec(-1.0f64..1.0, 1..=10)) {
                let k = l.len();
                let e = newton_ek(&MomentVector::from_spectrum(&l, k));
                let neg = l.iter().any(|&x| x < 0.0);
                let found = (1..=k).any(|j| e.value(j) < 0.0);
                prop_assert_eq!(neg, found);
            }

            #[test]
            fn depth_monotone_in_tol(l in prop::collection::vec(-0.5f64..1.0, 2..=8), t in 0.0f64..0.1) {
                let e = newton_ek(&MomentVector::from_spectrum(&l, l.len()));
                prop_assert!(theta_profile(&e, t).depth() <= theta_profile(&e, t * 2.0 + 1e-3).depth());
            }
        }
    }
}
