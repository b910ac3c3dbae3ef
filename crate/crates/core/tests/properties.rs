use proptest::prelude::*;

use kernel_positivity::band::{build_band_matrix, moments_band, truncation_dim, DEFAULT_TRUNCATION_TOL};
use kernel_positivity::certify::{certify, CertifyOptions, Engine, Verdict, Witness};
use kernel_positivity::kernel::{normalization_n, trace};
use kernel_positivity::newton::{newton_ek, MomentSource, MomentVector};
use kernel_positivity::nystrom::{discretize, moments_nystrom, oracle_eigenvalues};
use kernel_positivity::spectrum::{derive_spectrum, gaussian_moment};
use kernel_positivity::sweep::{is_subset, run_sweep, SweepParam, SweepSpec};
use kernel_positivity::{GaussianParams, KernelSpec, PolyCoeffs};

fn gauss() -> impl Strategy<Value = GaussianParams> {
    (0.5f64..3.0, -0.5f64..0.5, 0.5f64..3.0, -0.5f64..0.5, -1.0f64..1.0)
        .prop_filter("|eps| <= 0.9", |&(a, _, c, _, _)| {
            let (sa, sc) = (f64::sqrt(a), f64::sqrt(c));
            ((sa - sc) / (sa + sc)).abs() <= 0.9
        })
        .prop_map(|(a, b, c, d, e)| GaussianParams::new(a, b, c, d, e).unwrap())
}

fn poly() -> impl Strategy<Value = PolyCoeffs> {
    (-1.0f64..1.0, -0.5f64..0.5, -1.0f64..1.0, -0.5f64..0.5, -0.5f64..0.5, 0.5f64..2.0).prop_map(|(a2, b2, g2, a1, b1, g0)| PolyCoeffs {
        alpha2: a2,
        beta2: b2,
        gamma2: g2,
        alpha1: a1,
        beta1: b1,
        gamma0: g0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_over_n_is_one(g in gauss(), p in poly()) {
        let n = normalization_n(&g, &p).unwrap();
        prop_assume!(n.abs() > 1e-3);
        let raw = trace(&KernelSpec::gauss_poly(g, p, false).unwrap()).unwrap();
        prop_assert!((raw.value / n - 1.0).abs() < 1e-10, "{} vs {}", raw.value, n);
        let normed = trace(&KernelSpec::gauss_poly(g, p, true).unwrap()).unwrap();
        prop_assert!((normed.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn band_agrees_with_nystrom(g in gauss(), p in poly()) {
        let eps = derive_spectrum(&g).eps;
        let band = build_band_matrix(&g, &p, truncation_dim(eps, DEFAULT_TRUNCATION_TOL), false).unwrap();
        let mb = moments_band(&band, 12);
        let spec = KernelSpec::gauss_poly(g, p, false).unwrap();
        let mn = moments_nystrom(&discretize(&spec, None, None).unwrap(), 12).unwrap().moments;
        for k in 1..=12 {
            let d = (mb.value(k) - mn.value(k)).abs() / mb.value(k).abs().max(1.0);
            prop_assert!(d <= 1e-8, "k={} band {} nystrom {}", k, mb.value(k), mn.value(k));
        }
    }

    #[test]
    fn nystrom_refinement_is_stable(g in gauss(), p in poly()) {
        let spec = KernelSpec::gauss_poly(g, p, false).unwrap();
        let coarse = discretize(&spec, None, None).unwrap();
        let m = coarse.size();
        let a = moments_nystrom(&coarse, 12).unwrap().moments;
        let b = moments_nystrom(&discretize(&spec, Some(2 * m), None).unwrap(), 12).unwrap().moments;
        for k in 1..=12 {
            prop_assert!((a.value(k) - b.value(k)).abs() < 1e-8 * a.value(k).abs().max(1.0), "k={}", k);
        }
    }

    #[test]
    fn band_is_linear_in_poly(g in gauss(), p in poly(), q in poly(), t in -2.0f64..2.0) {
        let dim = 40;
        let sum = p + q.scaled(t);
        let mp = build_band_matrix(&g, &p, dim, false).unwrap();
        let mq = build_band_matrix(&g, &q, dim, false).unwrap();
        let ms = build_band_matrix(&g, &sum, dim, false).unwrap();
        for m in 0..dim {
            for n in m.saturating_sub(2)..(m + 3).min(dim) {
                let want = mp.entry(m, n) + mq.entry(m, n) * t;
                prop_assert!((ms.entry(m, n) - want).norm() < 1e-12 * (1.0 + want.norm()));
            }
        }
    }

    #[test]
    fn refutation_is_monotone_in_depth(gamma2 in -0.6f64..6.0) {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2, gamma0: 1.0, ..PolyCoeffs::constant(0.0) };
        let spec = KernelSpec::gauss_poly(g, p, true).unwrap();
        let at = |depth| certify(&spec, &CertifyOptions { depth, engine: Engine::Band, oracle: false, ..Default::default() }).unwrap().verdict;
        let mut first: Option<usize> = None;
        for depth in [4, 8, 12, 20, 30] {
            match (at(depth), first) {
                (Verdict::NonPositive(Witness::NegativeEk { k, .. }), Some(k0)) => prop_assert!(k <= k0),
                (Verdict::NonPositive(Witness::NegativeEk { k, .. }), None) => first = Some(k),
                (Verdict::NonPositive(_), _) => {}
                (Verdict::PositiveUpTo { .. }, f) => prop_assert!(f.is_none(), "refuted at a lower depth, positive at {}", depth),
            }
        }
    }

    #[test]
    fn verdicts_are_one_sided_against_oracle(gamma2 in -1.0f64..6.0, gamma0 in 0.2f64..2.0) {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, gamma2, gamma0, ..PolyCoeffs::constant(0.0) };
        let spec = KernelSpec::gauss_poly(g, p, true).unwrap();
        let cert = certify(&spec, &CertifyOptions { depth: 30, oracle: false, ..Default::default() }).unwrap();
        let min_eig = *oracle_eigenvalues(&discretize(&spec, None, None).unwrap()).unwrap().last().unwrap();
        match cert.verdict {
            Verdict::NonPositive(_) => {
                prop_assert!(cert.verified);
                prop_assert!(min_eig < -1e-8, "refuted but oracle min {}", min_eig);
            }
            Verdict::PositiveUpTo { .. } => prop_assert!(min_eig >= -1e-6, "oracle min {}", min_eig),
        }
    }

    #[test]
    fn sweep_sets_are_nested(gamma0 in 0.3f64..1.5, alpha1 in -0.5f64..0.5) {
        let g = GaussianParams::real(1.5, 1.0).unwrap();
        let p = PolyCoeffs { alpha2: -1.0, alpha1, gamma0, ..PolyCoeffs::constant(0.0) };
        let mut s = SweepSpec::new(g, p, true, SweepParam::Gamma2, -1.0, 5.0, 13, 10);
        s.refine = false;
        let r = run_sweep(&s).unwrap();
        for k in 1..r.h_sets.len() {
            prop_assert!(is_subset(&r.h_sets[k], &r.h_sets[k - 1]), "k={}", k + 1);
        }
    }
}

#[test]
fn gaussian_ek_positive_iff_a_at_least_c() {
    let vals = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
    for &a in &vals {
        for &c in &vals {
            let sp = derive_spectrum(&GaussianParams::real(a, c).unwrap());
            let m: Vec<f64> = (1..=20).map(|k| gaussian_moment(&sp, k).unwrap()).collect();
            let err: Vec<f64> = m.iter().map(|x| 4.0 * f64::EPSILON * x.abs()).collect();
            let e = newton_ek(&MomentVector::from_f64(&m, &err, MomentSource::ClosedForm));
            let all_positive = (1..=20).all(|k| e.value(k) > -e.error(k));
            assert_eq!(all_positive, a >= c, "A={a} C={c}");
        }
    }
}
