use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use super::config::{Experiment, ExperimentConfig, WeightSpec};
use crate::bounds::{
    check_condition_g, check_condition_mp, condition_g_exponent, moment_bound_delta, moment_bound_main,
    set_indexed_bound, wu_moment_bound, BerryEsseenInputs, BoundParams, BoundReport, CovarianceTable, SCHEMA_VERSION,
    berry_esseen_terms, abs_epsilon_n,
};
use crate::dependence::{
    delta_analytic, marginal_norm, martingale_norm_bound, series_constant, DependenceProfile, ProfileOptions,
    Provenance, Series,
};
use crate::error::{Error, Result};
use crate::fields::stream::mix;
use crate::fields::{example_ratio_field, Field, FieldKind};
use crate::lattice::{IndexSet, LatticePoint};
use crate::montecarlo::{
    classical_berry_esseen, delta_from_samples, empirical_delta_n, empirical_lp_norms, verify_inequality,
    verify_values, ExperimentResult, Verdict, VerdictRecord,
};
use crate::regress::{estimate_gn, kernel_weights, regression_terms, standardized_statistic_samples, RegressionFunction};

pub const RESULTS_HEADER: &str =
    "schema_version,experiment,label,n,estimate,uncertainty,uncertainty_kind,replications,seed,inputs_digest";
pub const VERDICTS_HEADER: &str = "schema_version,experiment,label,n,lhs,uncertainty,rhs,ratio,verdict";
pub const MANIFEST_HEADER: &str = "schema_version,experiment,status,detail";

pub fn bound_reports_header() -> String {
    let rest = BoundReport::CSV_HEADER.split_once(',').map(|x| x.1).unwrap_or("");
    format!("schema_version,experiment,n,{rest}")
}

/// Counts of verdicts and failed experiments after a run.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub pass: usize,
    pub marginal: usize,
    pub fail: usize,
    pub errors: Vec<(Experiment, String)>,
}

struct Sink {
    results: Vec<String>,
    verdicts: Vec<String>,
    bounds: Vec<String>,
    manifest: Vec<String>,
    log: BufWriter<File>,
    summary: RunSummary,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl Sink {
    fn log(&mut self, value: serde_json::Value) {
        let mut v = value;
        v["ts"] = json!(now());
        let _ = writeln!(self.log, "{v}");
    }

    fn result(&mut self, exp: Experiment, label: &str, n: usize, r: &ExperimentResult) {
        self.results.push(format!(
            "{SCHEMA_VERSION},{},{label},{n},{},{},{},{},{},{}",
            exp.as_str(),
            r.estimate,
            r.uncertainty,
            match r.kind {
                crate::montecarlo::Uncertainty::StandardError => "se",
                crate::montecarlo::Uncertainty::DkwHalfWidth => "dkw",
            },
            r.replications,
            r.seed,
            r.inputs_digest
        ));
        self.log(json!({"event": "result", "experiment": exp.as_str(), "label": label, "n": n,
            "estimate": r.estimate, "uncertainty": r.uncertainty, "wall_time_s": r.wall_time_s}));
    }

    /// Deterministic value with no sampling error.
    fn value(&mut self, exp: Experiment, label: &str, n: usize, v: f64) {
        self.results.push(format!("{SCHEMA_VERSION},{},{label},{n},{v},0,exact,0,0,", exp.as_str()));
    }

    fn verdict(&mut self, exp: Experiment, label: &str, n: usize, v: VerdictRecord) {
        match v.verdict {
            Verdict::Pass => self.summary.pass += 1,
            Verdict::Marginal => self.summary.marginal += 1,
            Verdict::Fail => self.summary.fail += 1,
        }
        self.verdicts.push(format!(
            "{SCHEMA_VERSION},{},{label},{n},{},{},{},{},{}",
            exp.as_str(),
            v.lhs,
            v.uncertainty,
            v.rhs,
            v.ratio,
            v.verdict.as_str()
        ));
        self.log(json!({"event": "verdict", "experiment": exp.as_str(), "label": label, "n": n,
            "lhs": v.lhs, "rhs": v.rhs, "verdict": v.verdict.as_str()}));
    }

    fn bound(&mut self, exp: Experiment, n: usize, r: &BoundReport) {
        let row = r.csv_row();
        let rest = row.split_once(',').map(|x| x.1).unwrap_or("");
        self.bounds.push(format!("{SCHEMA_VERSION},{},{n},{rest}", exp.as_str()));
        self.log(json!({"event": "bound", "experiment": exp.as_str(), "n": n, "report": r}));
    }

    fn note(&mut self, exp: Experiment, message: impl Into<String>) {
        self.log(json!({"event": "note", "experiment": exp.as_str(), "message": message.into()}));
    }
}

/// Experiment-specific seed, stable under reordering of the experiment list.
fn sub_seed(base: u64, exp: Experiment, k: u64) -> u64 {
    mix(mix(base ^ ((exp as u64 + 1) << 56)) ^ k)
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    field: Field,
    profile: Option<DependenceProfile>,
    cov: Option<CovarianceTable>,
}

impl Context<'_> {
    fn profile(&mut self) -> Result<&DependenceProfile> {
        if self.profile.is_none() {
            let opts = ProfileOptions {
                mc_reps: self.cfg.replications.moments,
                inner_reps: self.cfg.replications.inner,
                seed: sub_seed(self.cfg.seed, Experiment::Delta, u64::MAX),
                ..Default::default()
            };
            self.profile = Some(DependenceProfile::build(&self.field, self.cfg.params.p, &opts)?);
        }
        Ok(self.profile.as_ref().expect("profile built"))
    }

    fn cov(&mut self) -> Result<&CovarianceTable> {
        if self.cov.is_none() {
            let seed = sub_seed(self.cfg.seed, Experiment::BerryEsseen, u64::MAX);
            self.cov = Some(CovarianceTable::build(&self.field, self.cfg.replications.moments, seed)?);
        }
        Ok(self.cov.as_ref().expect("covariance built"))
    }

    fn x0_norm(&self) -> Result<f64> {
        let seed = sub_seed(self.cfg.seed, Experiment::BerryEsseen, u64::MAX - 1);
        Ok(marginal_norm(&self.field, self.cfg.params.p_prime(), self.cfg.replications.moments, seed)?.estimate)
    }
}

/// Runs every configured experiment and writes the CSV artifacts and the log into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let log = BufWriter::new(File::create(out.join("log.jsonl"))?);
    let mut sink = Sink {
        results: Vec::new(),
        verdicts: Vec::new(),
        bounds: Vec::new(),
        manifest: Vec::new(),
        log,
        summary: RunSummary { out_dir: out.to_path_buf(), ..Default::default() },
    };
    sink.log(json!({"event": "start", "config": cfg}));
    let mut ctx = Context { cfg, field: cfg.model.prepare()?, profile: None, cov: None };
    for &exp in &cfg.experiments {
        let started = Instant::now();
        let outcome = match exp {
            Experiment::Delta => run_delta(&mut ctx, &mut sink),
            Experiment::Moments => run_moments(&mut ctx, &mut sink),
            Experiment::BerryEsseen => run_berry_esseen(&mut ctx, &mut sink),
            Experiment::SetIndexed => run_set_indexed(&mut ctx, &mut sink),
            Experiment::Regression => run_regression(&mut ctx, &mut sink),
            Experiment::ConditionsD2 => run_conditions(&mut ctx, &mut sink),
            Experiment::ExampleRatio => run_ratio(&mut ctx, &mut sink),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => {
                sink.manifest.push(format!("{SCHEMA_VERSION},{},ok,", exp.as_str()));
                sink.log(json!({"event": "done", "experiment": exp.as_str(), "wall_time_s": secs}));
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                sink.manifest.push(format!("{SCHEMA_VERSION},{},error,{msg}", exp.as_str()));
                sink.log(json!({"event": "error", "experiment": exp.as_str(), "message": e.to_string()}));
                sink.summary.errors.push((exp, e.to_string()));
            }
        }
    }
    write_csv(&out.join("results.csv"), RESULTS_HEADER, &sink.results)?;
    write_csv(&out.join("verdicts.csv"), VERDICTS_HEADER, &sink.verdicts)?;
    write_csv(&out.join("bound_reports.csv"), &bound_reports_header(), &sink.bounds)?;
    write_csv(&out.join("manifest.csv"), MANIFEST_HEADER, &sink.manifest)?;
    if let Some(p) = &ctx.profile {
        std::fs::write(out.join("profile.csv"), p.to_csv())?;
    }
    let s = &sink.summary;
    let end = json!({"event": "end", "pass": s.pass, "marginal": s.marginal, "fail": s.fail, "errors": s.errors.len()});
    sink.log(end);
    sink.log.flush()?;
    Ok(sink.summary)
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

fn run_delta(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::Delta;
    let p = ctx.cfg.params.p;
    let (alpha, beta) = (ctx.cfg.params.alpha, ctx.cfg.params.beta);
    let profile = ctx.profile()?.clone();
    let c2 = series_constant(&profile, Series::C2 { alpha });
    let cp = series_constant(&profile, Series::Cp { beta });
    sink.value(exp, "C2", 0, c2.value);
    sink.value(exp, "Cp", 0, cp.value);
    sink.value(exp, "truncation", 0, profile.truncation as f64);
    for r in profile.shells.iter().take(7) {
        let j = r.shell as usize;
        sink.value(exp, "S2", j, r.s2.value);
        sink.value(exp, "Sp", j, r.sp.value);
        for (q, n, s) in [(2.0, &r.n2, &r.s2), (p, &r.np, &r.sp)] {
            if n.provenance == Provenance::LemmaBound {
                continue;
            }
            let label = if q == 2.0 { "increment_norm_2" } else { "increment_norm_p" };
            sink.verdict(exp, label, j, verify_values(n.value, n.se, martingale_norm_bound(s.value, q)?));
        }
    }
    Ok(())
}

fn run_moments(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::Moments;
    let p = ctx.cfg.params.p;
    let profile = ctx.profile()?.clone();
    for (k, (n, w)) in ctx.cfg.weight_families()?.into_iter().enumerate() {
        let seed = sub_seed(ctx.cfg.seed, exp, k as u64);
        let est = empirical_lp_norms(&ctx.field, &w, &[2.0, p], ctx.cfg.replications.moments, seed)?;
        sink.result(exp, "norm_2", n, &est[0]);
        sink.result(exp, "norm_p", n, &est[1]);
        let main2 = moment_bound_main(&profile, &w, 2.0)?;
        let main = moment_bound_main(&profile, &w, p)?;
        let delta = moment_bound_delta(&profile, &w, p)?;
        sink.value(exp, "bound_main_2", n, main2);
        sink.value(exp, "bound_main_p", n, main);
        sink.value(exp, "bound_delta_p", n, delta);
        sink.verdict(exp, "main_2", n, verify_inequality(&est[0], main2));
        sink.verdict(exp, "main_p", n, verify_inequality(&est[1], main));
        sink.verdict(exp, "delta_p", n, verify_inequality(&est[1], delta));
        if ctx.field.is_linear() {
            let wu = wu_moment_bound(&ctx.field, &w, p)?;
            sink.value(exp, "bound_wu_p", n, wu);
            sink.verdict(exp, "wu_p", n, verify_inequality(&est[1], wu));
        }
    }
    Ok(())
}

fn run_berry_esseen(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::BerryEsseen;
    let params = ctx.cfg.params;
    let profile = ctx.profile()?.clone();
    let cov = ctx.cov()?.clone();
    let x0 = ctx.x0_norm()?;
    let sigma = cov.sigma_sq.sqrt();
    let kappa = cov.kappa_geo();
    sink.value(exp, "sigma_sq", 0, cov.sigma_sq);
    sink.value(exp, "kappa_geo", 0, kappa);
    let cube = matches!(ctx.cfg.weights, WeightSpec::Cube { .. });
    let iid = ctx.field.linear_support().is_some_and(|s| s.len() == 1);
    for (k, (n, w)) in ctx.cfg.weight_families()?.into_iter().enumerate() {
        let inputs = BerryEsseenInputs::assemble(format!("n{n}"), &profile, &cov, &w, &params, x0)?;
        let report = berry_esseen_terms(&inputs, &params)?;
        sink.bound(exp, n, &report);
        sink.value(exp, "eps_n", n, inputs.eps_n);
        sink.value(exp, "n_abs_eps_n", n, n as f64 * inputs.eps_n.abs());
        if cube {
            // |eps_n| <= kappa_geo / n on cubes
            sink.verdict(exp, "eps_kappa", n, verify_values(abs_epsilon_n(&w, &cov)?, 0.0, kappa / n as f64));
        }
        let seed = sub_seed(ctx.cfg.seed, exp, k as u64);
        let delta = empirical_delta_n(&ctx.field, &w, sigma, ctx.cfg.replications.cdf, seed)?;
        sink.result(exp, "delta_hat", n, &delta);
        if report.n0_condition {
            sink.verdict(exp, "certificate", n, verify_inequality(&delta, report.total.min(1.0)));
        } else {
            sink.note(exp, format!("n = {n}: n0 condition fails (lhs {} <= sigma/2 = {}); certificate withheld", report.n0_lhs, sigma / 2.0));
        }
        if iid && cube {
            let m = w.len() as u64;
            let third = ctx
                .field
                .marginal_norm_exact(3.0)
                .ok_or_else(|| Error::AnalyticUnavailable("third absolute moment".into()))?
                .powi(3);
            let rhs = classical_berry_esseen(third, sigma, m);
            sink.value(exp, "classical_bound", n, rhs);
            sink.verdict(exp, "classical", n, verify_inequality(&delta, rhs));
        }
    }
    Ok(())
}

fn run_set_indexed(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::SetIndexed;
    let params = ctx.cfg.params;
    let profile = ctx.profile()?.clone();
    let cov = ctx.cov()?.clone();
    let x0 = ctx.x0_norm()?;
    let WeightSpec::Cube { sizes } = &ctx.cfg.weights else {
        return Err(Error::Config("set_indexed needs cube weights".into()));
    };
    for &n in sizes {
        let region = IndexSet::cube(n, ctx.field.dim())?;
        let r = set_indexed_bound(&region, &cov, &profile, &params, x0)?;
        sink.value(exp, "exponent_q", n, r.exponent);
        sink.value(exp, "size_power", n, r.size_power);
        sink.value(exp, "overlap_series", n, r.overlap_series);
        sink.bound(exp, n, &r.weighted);
    }
    Ok(())
}

fn run_regression(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::Regression;
    let params = ctx.cfg.params;
    let spec = ctx.cfg.regression.clone().ok_or_else(|| Error::Config("missing regression section".into()))?;
    let profile = ctx.profile()?.clone();
    let cov = ctx.cov()?.clone();
    let x0 = ctx.x0_norm()?;
    let dim = ctx.field.dim();
    let mut prev_gap = f64::INFINITY;
    let mut monotone = true;
    for (k, &n) in spec.sizes.iter().enumerate() {
        let design = spec.design(n, dim)?;
        let r = regression_terms(&design, &profile, &cov, &params, x0)?;
        let gap = (r.a_n - 1.0).abs();
        monotone &= gap < prev_gap;
        prev_gap = gap;
        sink.value(exp, "a_n", n, r.a_n);
        sink.value(exp, "eps_n", n, r.eps_n);
        sink.value(exp, "n1_sum_ratio", n, r.n1.sum_ratio);
        sink.value(exp, "n1_square_ratio", n, r.n1.square_ratio);
        sink.value(exp, "nh", n, r.bandwidth_diagnostics.nh);
        sink.value(exp, "nh_pow", n, r.bandwidth_diagnostics.nh_pow);
        sink.value(exp, "an_term", n, r.an_term);
        for (t, e) in r.exponents.iter().enumerate() {
            sink.value(exp, &format!("exponent_{}", t + 1), n, *e);
        }
        sink.value(exp, "perturbation", n, r.perturbation);
        sink.value(exp, "certified", n, r.certified);
        sink.bound(exp, n, &r.weighted);
        if !r.bandwidth_diagnostics.nh_pow_small {
            sink.note(exp, format!("n = {n}: n h^(d+1) = {} is not small", r.bandwidth_diagnostics.nh_pow));
        }

        // zero noise and constant g: the estimator is a weighted average of a constant
        let mut flat = design.clone();
        let c = 1.5;
        flat.g = RegressionFunction::Constant { value: c };
        let w = kernel_weights(&flat)?;
        let est = estimate_gn(&flat, &w, |_| 0.0);
        sink.verdict(exp, "zero_noise", n, verify_values((est - c).abs(), 0.0, 4.0 * f64::EPSILON * c));

        let seed = sub_seed(ctx.cfg.seed, exp, k as u64);
        let started = Instant::now();
        let samples = standardized_statistic_samples(&ctx.field, &design, ctx.cfg.replications.cdf, seed)?;
        let scale = r.weighted.sigma * design.kernel.constants().l2_norm;
        let digest = crate::montecarlo::inputs_digest(&(&design, ctx.field.model(), ctx.cfg.replications.cdf, seed));
        let delta = delta_from_samples(&samples, scale, seed, digest, started)?;
        sink.result(exp, "delta_hat", n, &delta);
        if r.weighted.n0_condition && r.n1.holds {
            sink.verdict(exp, "certificate", n, verify_inequality(&delta, r.certified.min(1.0)));
        } else {
            sink.note(exp, format!("n = {n}: n0 = {}, n1 = {}; certificate withheld", r.weighted.n0_condition, r.n1.holds));
        }
    }
    sink.value(exp, "a_n_gap_decreasing", 0, if monotone { 1.0 } else { 0.0 });
    Ok(())
}

fn run_conditions(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::ConditionsD2;
    let FieldKind::Linear { coefficients, .. } = &ctx.cfg.model.kind else {
        return Err(Error::Config("conditions_d2 needs a linear model".into()));
    };
    let BoundParams { p, alpha, beta, .. } = ctx.cfg.params;
    let mp = check_condition_mp(coefficients)?;
    let g = check_condition_g(coefficients, p, alpha, beta)?;
    sink.value(exp, "exponent_s", 0, condition_g_exponent(p, alpha, beta));
    sink.value(exp, "condition_mp", 0, if mp.holds() { 1.0 } else { 0.0 });
    sink.value(exp, "condition_g", 0, if g.holds() { 1.0 } else { 0.0 });
    sink.note(exp, format!("mp: {mp:?}; g: {g:?}"));
    Ok(())
}

fn run_ratio(ctx: &mut Context, sink: &mut Sink) -> Result<()> {
    let exp = Experiment::ExampleRatio;
    let p = ctx.cfg.params.p;
    let dim = ctx.field.dim();
    let field = example_ratio_field(p, dim)?.prepare()?;
    let mut prev = 0.0;
    let mut increasing = true;
    for k in 1..=ctx.cfg.ratio_shells {
        let i = LatticePoint::on_first_axis(dim, k as i64);
        let ratio = delta_analytic(&field, &i, p)? / delta_analytic(&field, &i, 2.0)?;
        increasing &= ratio > prev;
        prev = ratio;
        sink.value(exp, "ratio", k as usize, ratio);
    }
    sink.value(exp, "strictly_increasing", 0, if increasing { 1.0 } else { 0.0 });
    Ok(())
}
