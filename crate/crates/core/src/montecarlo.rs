//! Empirical counterparts of the bounded quantities, with error bars.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dependence::SE_BATCHES;
use crate::error::{Error, Result};
use crate::fields::{Field, InnovationStream, ResidualSum, WeightedSum};
use crate::lattice::WeightFamily;
use crate::numeric::{lp_root_estimate, phi, replicate};

pub const DEFAULT_DKW_DELTA: f64 = 1e-3;
pub const DEFAULT_CDF_REPS: u64 = 20_000;
pub const DEFAULT_MOMENT_REPS: u64 = 10_000;
/// Admissible constant in the classical i.i.d. Berry-Esseen inequality.
pub const CLASSICAL_BE_CONSTANT: f64 = 0.4748;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    StandardError,
    DkwHalfWidth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub estimate: f64,
    pub uncertainty: f64,
    pub kind: Uncertainty,
    pub replications: u64,
    pub seed: u64,
    pub wall_time_s: f64,
    pub inputs_digest: String,
}

/// SHA-256 of the JSON form of the inputs.
pub fn inputs_digest<T: Serialize + ?Sized>(inputs: &T) -> String {
    let json = serde_json::to_vec(inputs).expect("inputs serialize");
    hex::encode(Sha256::digest(&json))
}

/// `sqrt(ln(2/delta) / (2N))`.
pub fn dkw_half_width(n: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// `sup_t |F_N(t) - F(t)|` at the jump points of the empirical CDF.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("sample {x}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut worst = 0.0f64;
    let mut k = 0;
    while k < s.len() {
        // ties: the CDF jumps once by the multiplicity
        let mut e = k;
        while e + 1 < s.len() && s[e + 1] == s[k] {
            e += 1;
        }
        let f = cdf(s[k]);
        worst = worst.max((k as f64 / n - f).abs()).max(((e + 1) as f64 / n - f).abs());
        k = e + 1;
    }
    Ok(worst)
}

/// Kolmogorov distance to `N(0, sigma^2)` with a DKW half-width.
pub fn delta_from_samples(samples: &[f64], sigma: f64, seed: u64, digest: String, started: Instant) -> Result<ExperimentResult> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
    }
    let d = kolmogorov_distance(samples, |t| phi(t / sigma))?;
    Ok(ExperimentResult {
        estimate: d,
        uncertainty: dkw_half_width(samples.len() as u64, DEFAULT_DKW_DELTA),
        kind: Uncertainty::DkwHalfWidth,
        replications: samples.len() as u64,
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        inputs_digest: digest,
    })
}

/// Draws of `S / |w|_2` with `S = sum w_i X_i`.
pub fn normalized_sum_samples(field: &Field, w: &WeightFamily, reps: u64, seed: u64) -> Result<Vec<f64>> {
    let ws = WeightedSum::new(field, w)?;
    let norm = w.norm_lq(2.0);
    let s = replicate(reps, |r| ws.sample(InnovationStream::new(seed, r)) / norm);
    if let Some(x) = s.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("weighted sum draw {x}")));
    }
    Ok(s)
}

fn digest_of(field: &Field, w: &WeightFamily, tag: &str, extra: &[f64]) -> String {
    let weights: Vec<(Vec<i64>, f64)> = w.iter().map(|(k, v)| (k.coords().to_vec(), v)).collect();
    inputs_digest(&(tag, field.model(), field.radius(), weights, extra))
}

/// `sup_t |P(S/|w|_2 <= t) - Phi(t/sigma)|` by simulation.
pub fn empirical_delta_n(field: &Field, w: &WeightFamily, sigma: f64, reps: u64, seed: u64) -> Result<ExperimentResult> {
    if reps < 100 {
        return Err(Error::InvalidParameter(format!("{reps} replications; at least 100 needed")));
    }
    let started = Instant::now();
    let s = normalized_sum_samples(field, w, reps, seed)?;
    delta_from_samples(&s, sigma, seed, digest_of(field, w, "delta", &[sigma, reps as f64]), started)
}

fn lp_result(abs_pow: &[f64], p: f64, seed: u64, digest: String, started: Instant) -> Result<ExperimentResult> {
    if let Some(x) = abs_pow.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("|S|^{p} = {x}; moment of order {p} may not exist")));
    }
    let (est, se) = lp_root_estimate(abs_pow, p, SE_BATCHES);
    Ok(ExperimentResult {
        estimate: est,
        uncertainty: se,
        kind: Uncertainty::StandardError,
        replications: abs_pow.len() as u64,
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        inputs_digest: digest,
    })
}

/// `|sum w_i X_i|_p` for several orders from one set of draws.
pub fn empirical_lp_norms(field: &Field, w: &WeightFamily, orders: &[f64], reps: u64, seed: u64) -> Result<Vec<ExperimentResult>> {
    if reps < 2 * SE_BATCHES as u64 {
        return Err(Error::InvalidParameter(format!("{reps} replications; at least {} needed", 2 * SE_BATCHES)));
    }
    let started = Instant::now();
    let ws = WeightedSum::new(field, w)?;
    let draws = replicate(reps, |r| ws.sample(InnovationStream::new(seed, r)));
    orders
        .iter()
        .map(|&p| {
            let pw: Vec<f64> = draws.iter().map(|s| s.abs().powf(p)).collect();
            lp_result(&pw, p, seed, digest_of(field, w, "lp", &[p, reps as f64]), started)
        })
        .collect()
}

pub fn empirical_lp_norm(field: &Field, w: &WeightFamily, p: f64, reps: u64, seed: u64) -> Result<ExperimentResult> {
    Ok(empirical_lp_norms(field, w, &[p], reps, seed)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximationError {
    pub result: ExperimentResult,
    /// Largest inner standard error of a resampled conditional expectation.
    pub max_inner_se: f64,
}

/// `|S - S^{(m)}|_q` by simulation of the m-dependent approximation.
pub fn approximation_error(
    field: &Field,
    w: &WeightFamily,
    m: u64,
    q: f64,
    reps: u64,
    seed: u64,
    inner_reps: usize,
) -> Result<ApproximationError> {
    if reps < 2 * SE_BATCHES as u64 {
        return Err(Error::InvalidParameter(format!("{reps} replications; at least {} needed", 2 * SE_BATCHES)));
    }
    let started = Instant::now();
    let rs = ResidualSum::new(field, w, m, inner_reps)?;
    let draws = replicate(reps, |r| rs.sample(InnovationStream::new(seed, r)));
    let mut pw = Vec::with_capacity(draws.len());
    let mut max_inner_se = 0.0f64;
    for d in draws {
        let (x, se) = d?;
        pw.push(x.abs().powf(q));
        max_inner_se = max_inner_se.max(se);
    }
    let result = lp_result(&pw, q, seed, digest_of(field, w, "approx", &[m as f64, q, reps as f64]), started)?;
    Ok(ApproximationError { result, max_inner_se })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Marginal,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Marginal => "MARGINAL",
            Verdict::Fail => "FAIL",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub lhs: f64,
    pub uncertainty: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub verdict: Verdict,
}

/// PASS below the certified value, MARGINAL within three uncertainties above it.
pub fn verify_values(lhs: f64, uncertainty: f64, rhs: f64) -> VerdictRecord {
    let verdict = if lhs <= rhs {
        Verdict::Pass
    } else if lhs <= rhs + 3.0 * uncertainty {
        Verdict::Marginal
    } else {
        Verdict::Fail
    };
    VerdictRecord { lhs, uncertainty, rhs, ratio: lhs / rhs, verdict }
}

pub fn verify_inequality(lhs: &ExperimentResult, rhs_certified: f64) -> VerdictRecord {
    verify_values(lhs.estimate, lhs.uncertainty, rhs_certified)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Empirical `delta(Z + Z')`.
    pub delta_sum: f64,
    /// Empirical `delta(Z)`.
    pub delta_z: f64,
    /// Empirical `|Z'|_p`.
    pub perturbation_norm: f64,
    pub rhs: f64,
    pub dkw: f64,
    /// `rhs - delta_sum`.
    pub slack: f64,
    pub verdict: Verdict,
}

/// Both sides of `delta(Z + Z') <= 2 delta(Z) + |Z'|_p^{p/(p+1)}`, with `delta`
/// the Kolmogorov distance to the standard normal.
pub fn perturbation_check(z: &[f64], zp: &[f64], p: f64) -> Result<PerturbationReport> {
    if z.len() != zp.len() {
        return Err(Error::LengthMismatch(z.len(), zp.len()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    let sum: Vec<f64> = z.iter().zip(zp).map(|(a, b)| a + b).collect();
    let delta_sum = kolmogorov_distance(&sum, phi)?;
    let delta_z = kolmogorov_distance(z, phi)?;
    let norm = (zp.iter().map(|v| v.abs().powf(p)).sum::<f64>() / zp.len() as f64).powf(1.0 / p);
    let rhs = 2.0 * delta_z + norm.powf(p / (p + 1.0));
    let dkw = dkw_half_width(z.len() as u64, DEFAULT_DKW_DELTA);
    // delta(Z + Z') and delta(Z) each carry one DKW half-width
    let v = verify_values(delta_sum, dkw, rhs + 2.0 * dkw);
    Ok(PerturbationReport {
        delta_sum,
        delta_z,
        perturbation_norm: norm,
        rhs,
        dkw,
        slack: rhs - delta_sum,
        verdict: if delta_sum <= rhs { Verdict::Pass } else { v.verdict },
    })
}

/// `C E|X|^3 / (sigma^3 sqrt(n))` for sums of `n` i.i.d. copies.
pub fn classical_berry_esseen(abs_third: f64, sigma: f64, n: u64) -> f64 {
    CLASSICAL_BE_CONSTANT * abs_third / (sigma.powi(3) * (n as f64).sqrt())
}

/// Per-replication statistics stored as one value per line under a digest key.
#[derive(Clone, Debug)]
pub struct SampleCache {
    dir: PathBuf,
}

impl SampleCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.csv"))
    }

    pub fn store(&self, digest: &str, values: &[f64]) -> Result<()> {
        let mut s = String::with_capacity(values.len() * 20);
        for v in values {
            s.push_str(&format!("{v:e}\n"));
        }
        std::fs::write(self.path(digest), s)?;
        Ok(())
    }

    pub fn load(&self, digest: &str) -> Result<Option<Vec<f64>>> {
        let path = self.path(digest);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::MissingData(format!("corrupt cache line {l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Cached values for `digest`, computing and storing them when absent.
    pub fn get_or_compute(&self, digest: &str, f: impl FnOnce() -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        if let Some(v) = self.load(digest)? {
            return Ok(v);
        }
        let v = f()?;
        self.store(digest, &v)?;
        Ok(v)
    }
}
