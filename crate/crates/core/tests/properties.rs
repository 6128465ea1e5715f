use bernfield::bounds::{
    jsz_constant, n0_condition, set_indexed_exponent, tail_moment_bound, variance_identity_check, BoundParams,
    CovarianceTable,
};
use bernfield::dependence::{DependenceProfile, ProfileOptions};
use bernfield::fields::stream::SUBSTREAM_MAIN;
use bernfield::fields::{CoefficientEntry, CoefficientFamily, FieldModel, InnovationLaw, InnovationStream};
use bernfield::lattice::{cube_weights, shell_points, shell_size, LatticePoint, WeightFamily};
use bernfield::montecarlo::{dkw_half_width, kolmogorov_distance, verify_values, Verdict};
use bernfield::regress::{estimate_gn, kernel_weights, KernelSpec, RegressionDesign, RegressionFunction};
use proptest::prelude::*;

fn uniform_cdf(x: f64) -> f64 {
    let s = 3f64.sqrt();
    ((x + s) / (2.0 * s)).clamp(0.0, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shells_partition_the_cube(r in 0u64..6, d in 1usize..4) {
        let total: u64 = (0..=r).map(|j| shell_size(j, d)).sum();
        prop_assert_eq!(total, (2 * r + 1).pow(d as u32));
        let pts = shell_points(r, d).unwrap();
        prop_assert_eq!(pts.len() as u64, shell_size(r, d));
        prop_assert!(pts.iter().all(|p| p.sup_norm() == r));
    }

    #[test]
    fn weight_norms_are_homogeneous(
        vals in prop::collection::vec(-5.0f64..5.0, 1..12),
        c in -3.0f64..3.0,
        q in 1.0f64..6.0,
    ) {
        prop_assume!(vals.iter().any(|v| *v != 0.0) && c != 0.0);
        let w = WeightFamily::new(1, vals.iter().enumerate().map(|(i, v)| (LatticePoint::new(&[i as i64]).unwrap(), *v))).unwrap();
        let scaled = w.scaled(c).unwrap();
        prop_assert!((scaled.norm_lq(q) - c.abs() * w.norm_lq(q)).abs() <= 1e-12 * (1.0 + scaled.norm_lq(q)));
    }

    #[test]
    fn variance_identity_is_exact_for_linear_fields(
        coeffs in prop::collection::vec((-3i64..=3, -1.0f64..1.0), 1..5),
        weights in prop::collection::vec((0i64..10, 0.1f64..2.0), 1..8),
    ) {
        prop_assume!(coeffs.iter().any(|(_, a)| a.abs() > 1e-3));
        let entries = coeffs.iter().map(|(k, a)| CoefficientEntry { at: vec![*k], value: *a }).collect();
        let field = FieldModel::linear(1, InnovationLaw::Rademacher, CoefficientFamily::Explicit { entries }).prepare().unwrap();
        let cov = CovarianceTable::build(&field, 100, 1).unwrap();
        prop_assume!(cov.sigma_sq > 1e-6);
        let w = WeightFamily::new(1, weights.iter().map(|(i, v)| (LatticePoint::new(&[*i]).unwrap(), *v))).unwrap();
        let r = variance_identity_check(&field, &w, &cov, 100, 1).unwrap();
        prop_assert!(r.exact);
        prop_assert!(r.discrepancy.abs() <= 1e-10 * (1.0 + r.lhs.abs()), "{:?}", r);
    }

    #[test]
    fn tail_bound_shrinks_with_m(rate in 0.05f64..0.9, n in 2usize..40) {
        let field = FieldModel::linear(1, InnovationLaw::StandardNormal, CoefficientFamily::Geometric { rate, scale: 1.0 })
            .prepare()
            .unwrap();
        let prof = DependenceProfile::build(&field, 3.0, &ProfileOptions::default()).unwrap();
        let w = cube_weights(n, 1).unwrap();
        let mut prev = f64::INFINITY;
        for m in 0..8 {
            let b = tail_moment_bound(&prof, &w, 3.0, m).unwrap();
            prop_assert!(b <= prev && b >= 0.0);
            prev = b;
        }
    }

    #[test]
    fn set_indexed_exponent_decreases_in_alpha_and_beta(
        p in 2.01f64..8.0, gamma in 0.01f64..2.0, alpha in 0.01f64..20.0, beta in 0.01f64..20.0,
        scale in 1.0f64..4.0, d in 1usize..4,
    ) {
        let base = BoundParams { p, gamma, alpha, beta };
        let q = set_indexed_exponent(&base, d);
        let more_alpha = set_indexed_exponent(&BoundParams { alpha: alpha * scale, ..base }, d);
        let more_beta = set_indexed_exponent(&BoundParams { beta: beta * scale, ..base }, d);
        prop_assert!(more_alpha <= q && more_beta <= q);
    }

    #[test]
    fn n0_condition_is_monotone_in_c2(
        sigma in 0.1f64..5.0, eps_frac in -0.5f64..0.5, c2 in 0.0f64..100.0,
        gamma in 0.1f64..2.0, alpha in 0.1f64..10.0, norm in 1.0f64..1e4, shrink in 0.0f64..1.0,
    ) {
        let eps = eps_frac * sigma * sigma;
        if n0_condition(sigma, eps, c2, gamma, alpha, norm) {
            prop_assert!(n0_condition(sigma, eps, c2 * shrink, gamma, alpha, norm));
        }
    }

    #[test]
    fn jsz_constant_increases_past_e(a in 2.72f64..50.0, b in 2.72f64..50.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(jsz_constant(lo).unwrap() < jsz_constant(hi).unwrap());
    }

    #[test]
    fn kolmogorov_distance_dominates_pointwise_gaps(xs in prop::collection::vec(-2.0f64..2.0, 1..60)) {
        let d = kolmogorov_distance(&xs, uniform_cdf).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let n = xs.len() as f64;
        for &t in &xs {
            let below = xs.iter().filter(|x| **x < t).count() as f64 / n;
            let upto = xs.iter().filter(|x| **x <= t).count() as f64 / n;
            prop_assert!(d + 1e-12 >= (upto - uniform_cdf(t)).abs());
            prop_assert!(d + 1e-12 >= (below - uniform_cdf(t)).abs());
        }
    }

    #[test]
    fn verdicts_are_monotone_in_the_bound(lhs in 0.0f64..2.0, u in 0.0f64..0.1, rhs in 0.0f64..2.0, more in 0.0f64..1.0) {
        let rank = |v: Verdict| match v { Verdict::Pass => 0, Verdict::Marginal => 1, Verdict::Fail => 2 };
        let a = verify_values(lhs, u, rhs).verdict;
        let b = verify_values(lhs, u, rhs + more).verdict;
        prop_assert!(rank(b) <= rank(a));
    }

    #[test]
    fn zero_noise_estimator_reproduces_constants(n in 8usize..200, h in 0.02f64..0.5, x in 0.05f64..0.95, c in -10.0f64..10.0) {
        let design = RegressionDesign::new(n, h, vec![x], KernelSpec::pedestal_tent(1).unwrap(), RegressionFunction::Constant { value: c });
        prop_assume!(design.is_ok());
        let design = design.unwrap();
        let Ok(w) = kernel_weights(&design) else { return Ok(()); };
        prop_assert!(w.iter().all(|(i, b)| b > 0.0 && ((i.coords()[0] as f64 / n as f64) - x).abs() <= h + 1e-12));
        let est = estimate_gn(&design, &w, |_| 0.0);
        prop_assert!((est - c).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0));
    }
}

/// The DKW band at level 1e-3 should almost never be exceeded.
#[test]
fn dkw_band_covers_the_true_cdf() {
    let law = InnovationLaw::UniformCentered;
    let n = 500u64;
    let width = dkw_half_width(n, 1e-3);
    let mut exceed = 0;
    for rep in 0..400u64 {
        let s = InnovationStream::new(99, rep);
        let xs: Vec<f64> = (0..n as i64).map(|i| s.eps(&law, SUBSTREAM_MAIN, &LatticePoint::new(&[i]).unwrap())).collect();
        if kolmogorov_distance(&xs, uniform_cdf).unwrap() > width {
            exceed += 1;
        }
    }
    assert!(exceed <= 3, "{exceed} of 400 exceedances");
}
