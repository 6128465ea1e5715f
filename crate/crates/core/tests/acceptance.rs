//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use bernfield::bounds::{
    check_condition_g, check_condition_g_exponent, check_condition_mp, condition_g_exponent, counterexample_coeffs,
    epsilon_n, moment_bound_main, rosenthal_rhs_iid, set_indexed_exponent, tail_moment_bound,
    variance_identity_check, BerryEsseenInputs, berry_esseen_terms, BoundParams, CovarianceTable,
};
use bernfield::cli::{run, ExperimentConfig};
use bernfield::dependence::{
    delta_analytic, martingale_norm_bound, martingale_norm_mc, shell_sum_analytic, DependenceProfile, ProfileOptions,
};
use bernfield::fields::{
    example_ratio_field, CoefficientEntry, CoefficientFamily, Field, FieldKind, FieldModel, InnovationLaw,
    WindowFunction,
};
use bernfield::lattice::{cube_weights, LatticePoint};
use bernfield::montecarlo::{
    approximation_error, classical_berry_esseen, delta_from_samples, empirical_delta_n, empirical_lp_norms,
    verify_inequality, verify_values, Verdict, DEFAULT_CDF_REPS, DEFAULT_MOMENT_REPS,
};
use bernfield::regress::{
    estimate_gn, kernel_weights, regression_bound, regression_terms, standardized_statistic_samples, KernelSpec,
    RegressionDesign, RegressionFunction,
};

/// Criteria whose stated parameters cannot satisfy their own preconditions.
/// They run in full and must fail for the recorded reason.
const UNATTAINABLE: &[(u32, &str)] = &[(6, "n0 condition fails")];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Collects per-item failures of one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    count: usize,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn outcome(self, summary: &str) -> Outcome {
        if self.failures.is_empty() {
            Outcome::new(true, format!("{summary} ({} checks)", self.count))
        } else {
            Outcome::new(false, format!("{summary}: {}/{} failed: {}", self.failures.len(), self.count, self.failures.join("; ")))
        }
    }
}

fn normal() -> InnovationLaw {
    InnovationLaw::StandardNormal
}

fn geometric(dim: usize) -> Field {
    FieldModel::linear(dim, normal(), CoefficientFamily::Geometric { rate: 0.5, scale: 1.0 }).prepare().unwrap()
}

fn diagonal(r: f64) -> Field {
    FieldModel::linear(2, normal(), CoefficientFamily::Diagonal { exponent: r }).prepare().unwrap()
}

fn quadratic_window(dim: usize) -> Field {
    let mut coefficients = vec![CoefficientEntry { at: vec![0; dim], value: 1.0 }];
    for axis in 0..dim {
        let mut at = vec![0; dim];
        at[axis] = 1;
        coefficients.push(CoefficientEntry { at, value: 0.5 });
    }
    FieldModel { dim, law: normal(), kind: FieldKind::FiniteWindow { function: WindowFunction::Quadratic { coefficients } } }
        .prepare()
        .unwrap()
}

fn profile(field: &Field, p: f64) -> DependenceProfile {
    DependenceProfile::build(field, p, &ProfileOptions::default()).unwrap()
}

fn lp_norm_of_sum(field: &Field, n: usize, p: f64, seed: u64) -> bernfield::montecarlo::ExperimentResult {
    let w = cube_weights(n, field.dim()).unwrap();
    empirical_lp_norms(field, &w, &[p], DEFAULT_MOMENT_REPS, seed).unwrap().remove(0)
}

fn criterion_1() -> Outcome {
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    for (k, law) in [normal(), InnovationLaw::Rademacher, InnovationLaw::UniformCentered].into_iter().enumerate() {
        let field = FieldModel::iid(1, law).prepare().unwrap();
        for n in [10usize, 100, 1000] {
            for p in [2.5, 3.0, 4.0] {
                let lhs = lp_norm_of_sum(&field, n, p, 100 + k as u64 * 1000 + n as u64);
                let rhs = rosenthal_rhs_iid(&vec![1.0; n], &vec![law.moment_norm(p); n], p).unwrap();
                let v = verify_inequality(&lhs, rhs);
                worst = worst.max(v.ratio);
                c.check(v.verdict == Verdict::Pass && v.ratio < 0.2, || format!("{law:?} n={n} p={p} ratio {:.4}", v.ratio));
            }
        }
    }
    c.outcome(&format!("largest ratio {worst:.4}"))
}

fn criterion_2() -> Outcome {
    let zoo = [
        ("geometric d=1", geometric(1)),
        ("geometric d=2", geometric(2)),
        ("diagonal r=3", diagonal(3.0)),
        ("quadratic window d=2", quadratic_window(2)),
    ];
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    let orders = [2.5, 3.0, 4.0];
    for (k, (name, field)) in zoo.iter().enumerate() {
        let profiles: Vec<DependenceProfile> = orders.iter().map(|&p| profile(field, p)).collect();
        for n in [8usize, 16] {
            let w = cube_weights(n, field.dim()).unwrap();
            let norms = empirical_lp_norms(field, &w, &orders, DEFAULT_MOMENT_REPS, 200 + 10 * k as u64 + n as u64).unwrap();
            for ((p, prof), lhs) in orders.iter().zip(&profiles).zip(&norms) {
                let v = verify_inequality(lhs, moment_bound_main(prof, &w, *p).unwrap());
                worst = worst.max(v.ratio);
                c.check(v.verdict == Verdict::Pass, || format!("{name} n={n} p={p}: {:?}", v));
            }
        }
    }
    c.outcome(&format!("largest empirical/bound ratio {worst:.4}"))
}

fn criterion_3() -> Outcome {
    let fields = [
        ("geometric d=1", geometric(1)),
        ("geometric d=2", geometric(2)),
        ("diagonal r=3", diagonal(3.0)),
        ("ratio field", example_ratio_field(4.0, 1).unwrap().prepare().unwrap()),
    ];
    let mut c = Checks::default();
    for (k, (name, field)) in fields.iter().enumerate() {
        for q in [2.0, 3.0] {
            for j in 0..=6u64 {
                let m = martingale_norm_mc(field, j, q, 4000, 64, 300 + 100 * k as u64 + 10 * j + q as u64).unwrap();
                let bound = martingale_norm_bound(shell_sum_analytic(field, j, q).unwrap(), q).unwrap();
                let v = verify_values(m.estimate, m.se + m.inner_se, bound);
                c.check(v.verdict == Verdict::Pass, || format!("{name} j={j} q={q}: {} > {}", m.estimate, bound));
            }
        }
    }
    c.outcome("increment norms below the shell-sum bound for j <= 6")
}

fn criterion_4() -> Outcome {
    let mut c = Checks::default();
    let field = geometric(1);
    let w = cube_weights(16, 1).unwrap();
    let prof = profile(&field, 3.0);
    for q in [2.0, 3.0] {
        for m in 0..=6u64 {
            let ae = approximation_error(&field, &w, m, q, DEFAULT_MOMENT_REPS, 400 + 10 * m + q as u64, 64).unwrap();
            let rhs = tail_moment_bound(&prof, &w, q, m).unwrap();
            let v = verify_values(ae.result.estimate, ae.result.uncertainty, rhs);
            c.check(v.verdict == Verdict::Pass, || format!("geometric m={m} q={q}: {v:?}"));
        }
        let r = field.radius();
        for m in [r, r + 3] {
            let ae = approximation_error(&field, &w, m, q, 1000, 450, 64).unwrap();
            c.check(ae.result.estimate == 0.0, || format!("geometric m={m} >= R: error {}", ae.result.estimate));
        }
    }
    let window = quadratic_window(1);
    let ae = approximation_error(&window, &w, window.radius(), 2.0, 1000, 460, 16).unwrap();
    c.check(ae.result.estimate == 0.0, || format!("quadratic window at m = R: error {}", ae.result.estimate));
    c.outcome("residual norms below the tail bound for m <= 6, zero beyond the range")
}

fn criterion_5() -> Outcome {
    let mut c = Checks::default();
    let fields = [
        ("iid", FieldModel::iid(1, normal()).prepare().unwrap()),
        ("geometric d=1", geometric(1)),
        ("geometric d=2", geometric(2)),
        ("diagonal r=3", diagonal(3.0)),
    ];
    let mut worst = 0.0f64;
    for (name, field) in &fields {
        let cov = CovarianceTable::build(field, 1000, 500).unwrap();
        let mut prev = f64::INFINITY;
        for n in [4usize, 8, 16, 32] {
            let w = cube_weights(n, field.dim()).unwrap();
            let r = variance_identity_check(field, &w, &cov, 1000, 501).unwrap();
            worst = worst.max(r.relative);
            c.check(r.exact && r.relative <= 1e-10, || format!("{name} n={n}: relative {:.3e}", r.relative));
            if *name == "geometric d=2" {
                let eps = epsilon_n(&w, &cov).unwrap().abs();
                let kappa = cov.kappa_geo() / n as f64;
                c.check(eps <= kappa, || format!("n={n}: |eps_n| {eps} > kappa/n {kappa}"));
                c.check(eps < prev, || format!("n={n}: |eps_n| {eps} not below {prev}"));
                prev = eps;
            }
        }
    }
    c.outcome(&format!("largest relative discrepancy {worst:.2e}"))
}

fn be_report(field: &Field, n: usize, params: &BoundParams) -> bernfield::bounds::BoundReport {
    let prof = profile(field, params.p);
    let cov = CovarianceTable::build(field, 1000, 600).unwrap();
    let w = cube_weights(n, field.dim()).unwrap();
    let x0 = field.marginal_norm_exact(params.p_prime()).unwrap();
    let inputs = BerryEsseenInputs::assemble("acceptance", &prof, &cov, &w, params, x0).unwrap();
    berry_esseen_terms(&inputs, params).unwrap()
}

fn criterion_6() -> Outcome {
    let field = geometric(2);
    let n = 16;
    let params = BoundParams { p: 3.0, gamma: 0.1, alpha: 10.0, beta: 10.0 };
    let r = be_report(&field, n, &params);
    let w = cube_weights(n, 2).unwrap();
    let delta = empirical_delta_n(&field, &w, r.sigma, DEFAULT_CDF_REPS, 601).unwrap();
    let terms = [r.term_i, r.term_ii, r.term_iii, r.total];
    let finite = terms.iter().all(|t| t.is_finite() && *t > 0.0);
    let v = verify_inequality(&delta, r.total.min(1.0));
    let detail = format!(
        "C2 = {:.3e}, n0 lhs {:.4} vs sigma/2 {:.4}, total {:.3e}, delta_hat {:.4}",
        r.c2, r.n0_lhs, r.sigma / 2.0, r.total, delta.estimate
    );
    if !r.n0_condition {
        return Outcome::new(false, format!("n0 condition fails: {detail}"));
    }
    Outcome::new(finite && v.verdict == Verdict::Pass, detail)
}

/// Same field and weights with gamma raised until the n0 condition holds.
fn criterion_6_supplement() -> String {
    let field = geometric(2);
    let w = cube_weights(16, 2).unwrap();
    for gamma in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let params = BoundParams { p: 3.0, gamma, alpha: 0.5, beta: 0.5 };
        let r = be_report(&field, 16, &params);
        if r.n0_condition {
            let delta = empirical_delta_n(&field, &w, r.sigma, DEFAULT_CDF_REPS, 602).unwrap();
            let v = verify_inequality(&delta, r.total.min(1.0));
            return format!(
                "with gamma = {gamma}, alpha = beta = 0.5: n0 holds, total {:.3e}, delta_hat {:.4}, {}",
                r.total,
                delta.estimate,
                v.verdict.as_str()
            );
        }
    }
    "no gamma up to 8 satisfies the n0 condition".into()
}

fn criterion_7() -> Outcome {
    let mut c = Checks::default();
    let law = InnovationLaw::UniformCentered;
    let field = FieldModel::iid(1, law).prepare().unwrap();
    let third = law.moment_norm(3.0).powi(3);
    let mut prev: Option<(f64, f64)> = None;
    let mut summary = Vec::new();
    for n in [25usize, 100, 400] {
        let w = cube_weights(n, 1).unwrap();
        let delta = empirical_delta_n(&field, &w, 1.0, DEFAULT_CDF_REPS, 700 + n as u64).unwrap();
        let rhs = classical_berry_esseen(third, 1.0, n as u64);
        let v = verify_inequality(&delta, rhs);
        c.check(v.verdict == Verdict::Pass, || format!("n={n}: {v:?}"));
        if let Some((d, u)) = prev {
            c.check(delta.estimate <= d + u, || format!("n={n}: delta_hat {} above {} + {}", delta.estimate, d, u));
        }
        prev = Some((delta.estimate, delta.uncertainty));
        summary.push(format!("n={n}: {:.4} <= {:.4}", delta.estimate, rhs));
    }
    c.outcome(&summary.join(", "))
}

fn criterion_8() -> Outcome {
    let mut c = Checks::default();
    let p = 4.0;
    let field = example_ratio_field(p, 1).unwrap().prepare().unwrap();
    let mut prev = 0.0;
    let mut last = 0.0;
    for k in 1..=10i64 {
        let pt = LatticePoint::new(&[k]).unwrap();
        let ratio = delta_analytic(&field, &pt, p).unwrap() / delta_analytic(&field, &pt, 2.0).unwrap();
        // the coupled indicator difference is +-1 with probability 2P(1-P)
        let tail = 0.5 * 0.25f64.powi(k as i32);
        let oracle = (2.0 * tail * (1.0 - tail)).powf(1.0 / p - 0.5);
        c.check((ratio - oracle).abs() <= 1e-6 * oracle, || format!("k={k}: {ratio} vs oracle {oracle}"));
        c.check(ratio > prev, || format!("k={k}: ratio {ratio} not above {prev}"));
        prev = ratio;
        last = ratio;
    }
    c.check(last > 10.0, || format!("ratio at k = 10 is {last}"));
    c.outcome(&format!("ratio at k = 10 is {last:.3}"))
}

fn criterion_9() -> Outcome {
    let mut c = Checks::default();
    let geo = CoefficientFamily::Geometric { rate: 0.5, scale: 1.0 };
    c.check(check_condition_mp(&geo).unwrap().holds(), || "geometric: MP fails".into());
    c.check(check_condition_g(&geo, 3.0, 10.0, 10.0).unwrap().holds(), || "geometric: G fails".into());
    let diag = counterexample_coeffs(2.2).unwrap();
    // p = 2.1, alpha = 0.05, beta = 0.002 give s = 1.05
    let s = condition_g_exponent(2.1, 0.05, 0.002);
    c.check((s - 1.05).abs() < 1e-12, || format!("s = {s}"));
    c.check(check_condition_g(&diag, 2.1, 0.05, 0.002).unwrap().holds(), || "diagonal r=2.2: G fails".into());
    c.check(check_condition_g_exponent(&diag, 1.05).unwrap().holds(), || "diagonal r=2.2: G(s=1.05) fails".into());
    c.check(!check_condition_mp(&diag).unwrap().holds(), || "diagonal r=2.2: MP holds".into());
    // boundary cases of the diagonal family: r - s > 1 and 2r - 4 > 1
    c.check(!check_condition_g_exponent(&diag, 1.3).unwrap().holds(), || "diagonal r=2.2: G(s=1.3) holds".into());
    c.check(check_condition_mp(&counterexample_coeffs(2.6).unwrap()).unwrap().holds(), || "diagonal r=2.6: MP fails".into());
    c.outcome("geometric satisfies both; diagonal r = 2.2 satisfies G at s = 1.05 but not MP")
}

/// Independent form of the set-indexed exponent.
fn q_oracle(p: f64, gamma: f64, alpha: f64, beta: f64, d: f64) -> f64 {
    let pp = if p < 3.0 { p } else { 3.0 };
    let candidates = [
        1.0 - pp / 2.0 + gamma * d * (pp - 1.0) / 2.0,
        -(gamma * alpha) * (p / (p + 1.0)) / 2.0,
        (1.0 - p / 2.0 - gamma * beta * p / 2.0) / (p + 1.0),
    ];
    candidates.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_10() -> Outcome {
    let mut c = Checks::default();
    let ps = [2.5, 3.0, 4.0, 6.0];
    let gammas = [0.05, 0.1, 0.5, 1.0];
    let greek = [0.5, 1.0, 10.0];
    for &p in &ps {
        for &gamma in &gammas {
            for &alpha in &greek {
                for &beta in &greek {
                    for d in 1..=3usize {
                        let params = BoundParams { p, gamma, alpha, beta };
                        let q = set_indexed_exponent(&params, d);
                        let o = q_oracle(p, gamma, alpha, beta, d as f64);
                        c.check((q - o).abs() <= 1e-12, || format!("p={p} g={gamma} a={alpha} b={beta} d={d}: {q} vs {o}"));
                        let more_alpha = set_indexed_exponent(&BoundParams { alpha: alpha * 2.0, ..params }, d);
                        let more_beta = set_indexed_exponent(&BoundParams { beta: beta * 2.0, ..params }, d);
                        let more_d = set_indexed_exponent(&params, d + 1);
                        c.check(more_alpha <= q && more_beta <= q, || format!("q not monotone in alpha, beta at p={p} g={gamma}"));
                        c.check(more_d >= q, || format!("q not monotone in d at p={p} g={gamma}"));
                    }
                }
            }
        }
    }
    c.outcome("exponent table matches an independent formula to 1e-12 and is monotone")
}

fn criterion_11() -> Outcome {
    let mut c = Checks::default();
    let noises = [("iid", FieldModel::iid(1, normal()).prepare().unwrap()), ("geometric", geometric(1))];
    let mut summary = Vec::new();
    for (k, (name, field)) in noises.iter().enumerate() {
        let prof_opts = ProfileOptions::default();
        let cov = CovarianceTable::build(field, 1000, 1100).unwrap();
        let x0 = field.marginal_norm_exact(3.0).unwrap();
        let design_at = |n: usize| {
            RegressionDesign::new(n, (n as f64).powf(-1.0 / 3.0), vec![0.5], KernelSpec::pedestal_tent(1).unwrap(), RegressionFunction::Sine)
                .unwrap()
        };
        let prof = DependenceProfile::build(field, 3.0, &prof_opts).unwrap();
        let mut prev_gap = f64::INFINITY;
        for n in [32usize, 64, 128] {
            let params = BoundParams { p: 3.0, gamma: 0.5, alpha: 10.0, beta: 10.0 };
            let r = regression_terms(&design_at(n), &prof, &cov, &params, x0).unwrap();
            let gap = (r.a_n - 1.0).abs();
            c.check(gap <= 0.15, || format!("{name} n={n}: A_n = {}", r.a_n));
            c.check(gap < prev_gap, || format!("{name} n={n}: |A_n - 1| = {gap} not below {prev_gap}"));
            prev_gap = gap;
        }
        let design = design_at(64);
        // smallest gamma on a grid for which the n0 condition holds at n = 64
        let chosen = [0.5, 1.0, 2.0, 4.0, 8.0].into_iter().find_map(|gamma| {
            let params = BoundParams { p: 3.0, gamma, alpha: 10.0, beta: 10.0 };
            regression_bound(&design, &prof, &cov, &params, x0).ok().map(|r| (gamma, r))
        });
        let Some((gamma, r)) = chosen else {
            c.check(false, || format!("{name}: no gamma <= 8 satisfies n0 and n1 at n = 64"));
            continue;
        };
        let samples = standardized_statistic_samples(field, &design, DEFAULT_CDF_REPS, 1110 + k as u64).unwrap();
        let scale = r.weighted.sigma * design.kernel.constants().l2_norm;
        let delta = delta_from_samples(&samples, scale, 0, String::new(), std::time::Instant::now()).unwrap();
        let v = verify_inequality(&delta, r.certified.min(1.0));
        c.check(v.verdict == Verdict::Pass, || format!("{name}: {v:?}"));
        summary.push(format!("{name}: A_64 = {:.4}, gamma = {gamma}, delta_hat {:.4}", r.a_n, delta.estimate));

        let mut flat = design.clone();
        flat.g = RegressionFunction::Constant { value: 2.5 };
        let w = kernel_weights(&flat).unwrap();
        let est = estimate_gn(&flat, &w, |_| 0.0);
        c.check((est - 2.5).abs() <= 4.0 * f64::EPSILON * 2.5, || format!("zero-noise estimate {est}"));
    }
    c.outcome(&summary.join("; "))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn criterion_12() -> Outcome {
    let mut c = Checks::default();
    let files = ["results.csv", "verdicts.csv", "bound_reports.csv", "manifest.csv", "profile.csv"];
    for name in ["iid-baseline.json", "geometric-d2.json"] {
        let cfg = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&cfg, a.path()).unwrap();
        run(&cfg, b.path()).unwrap();
        for f in files {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            c.check(!x.is_empty() && x == y, || format!("{name}: {f} differs between runs"));
        }
    }
    c.outcome("bundled configs reproduce byte-identical CSV output")
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "independent Rosenthal inequality", criterion_1),
        (2, "moment inequality across the field zoo", criterion_2),
        (3, "increment norms against shell sums", criterion_3),
        (4, "m-dependent approximation error", criterion_4),
        (5, "variance identity and epsilon_n decay", criterion_5),
        (6, "Berry-Esseen certificate, geometric d=2", criterion_6),
        (7, "classical Berry-Esseen baseline", criterion_7),
        (8, "unbounded dependence-coefficient ratio", criterion_8),
        (9, "coefficient conditions in d=2", criterion_9),
        (10, "set-indexed exponent table", criterion_10),
        (11, "kernel regression", criterion_11),
        (12, "determinism of bundled configs", criterion_12),
    ];
    let mut lines = Vec::new();
    let mut unexpected = Vec::new();
    for (id, title, f) in criteria {
        let started = std::time::Instant::now();
        let o = f();
        let line = format!(
            "criterion {id:>2}: {} {title} [{:.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
        let _ = writeln!(std::io::stderr(), "{line}");
        lines.push(line);
        if id == 6 {
            let extra = format!("criterion  6: note {}", criterion_6_supplement());
            let _ = writeln!(std::io::stderr(), "{extra}");
            lines.push(extra);
        }
        match UNATTAINABLE.iter().find(|(u, _)| *u == id) {
            Some((_, reason)) if o.pass || !o.detail.starts_with(reason) => {
                unexpected.push(format!("criterion {id}: expected failure ({reason}), got: {}", o.detail))
            }
            Some(_) => {}
            None if !o.pass => unexpected.push(format!("criterion {id}: {}", o.detail)),
            None => {}
        }
    }
    let _ = std::fs::write(Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance.txt"), lines.join("\n") + "\n");
    assert!(unexpected.is_empty(), "{}", unexpected.join("\n"));
}
