//! Explicit moment and Berry-Esseen bounds and the quantities they are built from.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dependence::{series_constant, DependenceProfile, McEstimate, Provenance, Series, SeriesValue, SE_BATCHES};
use crate::error::{Error, Result};
use crate::fields::model::{CoordFn, Repr};
use crate::fields::stream::StreamSource;
use crate::fields::{CoefficientFamily, Decay, Field, InnovationLaw, InnovationStream, WeightedSum};
use crate::lattice::{ball_points, IndexSet, LatticePoint, WeightFamily};
use crate::numeric::{batch_mean_se, replicate};

/// Version tag written into every CSV produced from bound reports.
pub const SCHEMA_VERSION: u32 = 1;

/// `14.5 p / ln p`.
pub fn jsz_constant(p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::InvalidParameter(format!("moment order {p} must be at least 2")));
    }
    Ok(14.5 * p / p.ln())
}

/// Rosenthal-type right-hand side for independent centered summands with
/// the given `L^2` and `L^p` norms.
pub fn rosenthal_rhs_iid(norms2: &[f64], normsp: &[f64], p: f64) -> Result<f64> {
    if norms2.is_empty() || normsp.is_empty() {
        return Err(Error::InvalidParameter("empty list of summand norms".into()));
    }
    if norms2.len() != normsp.len() {
        return Err(Error::LengthMismatch(norms2.len(), normsp.len()));
    }
    let l2 = norms2.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lp = normsp.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(jsz_constant(p)? * (l2 + lp))
}

fn check_order(profile: &DependenceProfile, q: f64) -> Result<()> {
    if q != 2.0 && q != profile.p {
        return Err(Error::MissingData(format!(
            "profile holds orders 2 and {}, not {q}",
            profile.p
        )));
    }
    Ok(())
}

/// `sum_{j >= m} (4j+4)^e v(j)` over the retained shells.
fn weighted_shell_sum(profile: &DependenceProfile, e: f64, m: u64, v: impl Fn(usize) -> f64) -> f64 {
    profile
        .shells
        .iter()
        .enumerate()
        .filter(|(_, r)| r.shell >= m)
        .map(|(k, r)| (4.0 * r.shell as f64 + 4.0).powf(e) * v(k))
        .sum()
}

/// Tail form of the main moment bound: only shells `j >= m` contribute.
/// Bounds `|S - S^{(m)}|_q`, and `|S|_q` for `m = 0`.
pub fn tail_moment_bound(profile: &DependenceProfile, w: &WeightFamily, q: f64, m: u64) -> Result<f64> {
    check_order(profile, q)?;
    if w.dim() != profile.dim {
        return Err(Error::DimensionMismatch { expected: profile.dim, found: w.dim() });
    }
    let d = profile.dim as f64;
    let c = jsz_constant(q)?;
    let nq = |k: usize| {
        let r = &profile.shells[k];
        if q == 2.0 {
            r.n2.value
        } else {
            r.np.value
        }
    };
    let first = w.norm_lq(2.0) * weighted_shell_sum(profile, d / 2.0, m, |k| profile.shells[k].n2.value);
    let second = w.norm_lq(q) * weighted_shell_sum(profile, d * (1.0 - 1.0 / q), m, nq);
    Ok(c * (first + second))
}

/// Moment bound in terms of martingale-increment norms.
pub fn moment_bound_main(profile: &DependenceProfile, w: &WeightFamily, p: f64) -> Result<f64> {
    tail_moment_bound(profile, w, p, 0)
}

/// Moment bound in terms of shell sums of physical dependence coefficients.
pub fn moment_bound_delta(profile: &DependenceProfile, w: &WeightFamily, p: f64) -> Result<f64> {
    check_order(profile, p)?;
    if w.dim() != profile.dim {
        return Err(Error::DimensionMismatch { expected: profile.dim, found: w.dim() });
    }
    let d = profile.dim as f64;
    let c = jsz_constant(p)?;
    let sp = |k: usize| {
        let r = &profile.shells[k];
        if p == 2.0 {
            r.s2.value
        } else {
            r.sp.value
        }
    };
    let first = 2f64.sqrt() * w.norm_lq(2.0) * weighted_shell_sum(profile, d / 2.0, 0, |k| profile.shells[k].s2.value);
    let second = (2.0 * (p - 1.0)).sqrt() * w.norm_lq(p) * weighted_shell_sum(profile, d * (1.0 - 1.0 / p), 0, sp);
    Ok(c * (first + second))
}

/// Earlier bound `(2p sum w^2)^{1/2} sum_j delta_{j,p}` for linear fields,
/// reported next to `moment_bound_delta`.
pub fn wu_moment_bound(field: &Field, w: &WeightFamily, p: f64) -> Result<f64> {
    let support = field
        .linear_support()
        .ok_or_else(|| Error::AnalyticUnavailable("closed-form delta sums need a linear field".into()))?;
    let delta_sum: f64 = support.iter().map(|(_, a)| a.abs()).sum::<f64>() * field.law().difference_norm(p)?;
    Ok((2.0 * p).sqrt() * w.norm_lq(2.0) * delta_sum)
}

/// Autocovariances `E[X_0 X_j]` over the lags where they can be nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTable {
    pub dim: usize,
    pub entries: BTreeMap<LatticePoint, f64>,
    /// Standard errors of Monte Carlo entries (empty when exact).
    pub se: BTreeMap<LatticePoint, f64>,
    /// Every lag with `|j|_inf > radius` has zero covariance.
    pub radius: u64,
    /// Bound on the per-entry error against the untruncated field.
    pub tail_bound: f64,
    pub sigma_sq: f64,
    pub abs_sum: f64,
    pub provenance: Provenance,
}

fn pair_moment(f: &CoordFn, g: &CoordFn, law: &InnovationLaw) -> Result<f64> {
    Ok(match (*f, *g) {
        (
            CoordFn::Indicator { scale: s1, tail: p1, norm: n1, .. },
            CoordFn::Indicator { scale: s2, tail: p2, norm: n2, .. },
        ) => s1 * s2 / (n1 * n2) * (p1.min(p2) - p1 * p2),
        (CoordFn::Affine { scale: a }, CoordFn::Affine { scale: b }) => a * b * law.variance(),
        (CoordFn::Square { scale: a, mean }, CoordFn::Square { scale: b, .. }) => {
            a * b * (law.abs_moment(4.0)? - mean * mean)
        }
        _ => return Err(Error::AnalyticUnavailable("mixed coordinate maps".into())),
    })
}

/// Accumulates `sum_k v(k, k + lag)` for all pairs of a finite list.
fn pairwise_lags<T>(
    items: &[(LatticePoint, T)],
    dim: usize,
    mut v: impl FnMut(&T, &T) -> Result<f64>,
) -> Result<BTreeMap<LatticePoint, f64>> {
    let r = items.iter().map(|(k, _)| k.sup_norm()).max().unwrap_or(0) as i64;
    let side = (4 * r + 1) as usize;
    let cells = side.checked_pow(dim as u32).unwrap_or(usize::MAX);
    let mut out = BTreeMap::new();
    if cells <= 1 << 22 {
        let mut acc = vec![0.0f64; cells];
        for (k, a) in items {
            for (l, b) in items {
                let mut idx = 0usize;
                for t in 0..dim {
                    idx = idx * side + (l.coords()[t] - k.coords()[t] + 2 * r) as usize;
                }
                acc[idx] += v(a, b)?;
            }
        }
        for (idx, val) in acc.iter().enumerate() {
            if *val != 0.0 {
                let mut c = vec![0i64; dim];
                let mut rest = idx;
                for t in (0..dim).rev() {
                    c[t] = (rest % side) as i64 - 2 * r;
                    rest /= side;
                }
                out.insert(LatticePoint::new(&c)?, *val);
            }
        }
    } else {
        let mut acc: HashMap<LatticePoint, f64> = HashMap::new();
        for (k, a) in items {
            for (l, b) in items {
                *acc.entry(l.sub(k)).or_insert(0.0) += v(a, b)?;
            }
        }
        out.extend(acc.into_iter().filter(|(_, v)| *v != 0.0));
    }
    Ok(out)
}

impl CovarianceTable {
    pub fn from_entries(dim: usize, entries: BTreeMap<LatticePoint, f64>, provenance: Provenance) -> Result<Self> {
        for (k, v) in &entries {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: k.dim() });
            }
            let mirror = entries.get(&k.neg()).copied().unwrap_or(0.0);
            if (mirror - v).abs() > 1e-12 * v.abs().max(mirror.abs()) {
                return Err(Error::InvalidParameter(format!("covariance table is not symmetric at lag {k}")));
            }
        }
        let radius = entries.keys().map(|k| k.sup_norm()).max().unwrap_or(0);
        let sigma_sq = entries.values().sum();
        let abs_sum = entries.values().map(|v| v.abs()).sum();
        Ok(Self { dim, entries, se: BTreeMap::new(), radius, tail_bound: 0.0, sigma_sq, abs_sum, provenance })
    }

    /// Exact table for linear and one-coordinate fields, Monte Carlo with
    /// batch-mean standard errors for finite-window fields.
    pub fn build(field: &Field, reps: u64, seed: u64) -> Result<Self> {
        match &field.repr {
            Repr::Linear { support, tail_l2, total_l2 } => {
                let var = field.law().variance();
                let entries = pairwise_lags(support, field.dim(), |a, b| Ok(a * b * var))?;
                let mut t = Self::from_entries(field.dim(), entries, Provenance::Analytic)?;
                // |sum_k a_k a_{k+j} - truncated| <= 2 |a|_2 tail + tail^2
                t.tail_bound = var * (2.0 * total_l2 * tail_l2 + tail_l2 * tail_l2);
                Ok(t)
            }
            Repr::OneCoordinate { terms } => {
                let law = *field.law();
                let entries = pairwise_lags(terms, field.dim(), |f, g| pair_moment(f, g, &law))?;
                Self::from_entries(field.dim(), entries, Provenance::Analytic)
            }
            Repr::FiniteWindow { .. } => Self::monte_carlo(field, reps, seed),
        }
    }

    /// `E[X_0 X_j]` by simulation over all lags with `|j|_inf <= 2w`.
    pub fn monte_carlo(field: &Field, reps: u64, seed: u64) -> Result<Self> {
        if reps < 2 * SE_BATCHES as u64 {
            return Err(Error::InvalidParameter("too few replications for a covariance table".into()));
        }
        let reach = 2 * field.radius();
        let lags = ball_points(reach, field.dim());
        let origin = LatticePoint::origin(field.dim());
        let products: Vec<Vec<f64>> = replicate(reps, |r| {
            let src = StreamSource::main(InnovationStream::new(seed, r), *field.law());
            let x0 = field.value_at(&origin, &src);
            lags.iter().map(|j| x0 * field.value_at(j, &src)).collect()
        });
        let mut raw = BTreeMap::new();
        let mut raw_se = BTreeMap::new();
        for (t, j) in lags.iter().enumerate() {
            let col: Vec<f64> = products.iter().map(|row| row[t]).collect();
            let (m, se) = batch_mean_se(&col, SE_BATCHES);
            raw.insert(j.clone(), m);
            raw_se.insert(j.clone(), se);
        }
        let mut entries = BTreeMap::new();
        let mut se = BTreeMap::new();
        for j in &lags {
            let mj = j.neg();
            entries.insert(j.clone(), 0.5 * (raw[j] + raw[&mj]));
            se.insert(j.clone(), 0.5 * (raw_se[j].powi(2) + raw_se[&mj].powi(2)).sqrt());
        }
        let mut t = Self::from_entries(field.dim(), entries, Provenance::MonteCarlo)?;
        t.radius = reach;
        t.se = se;
        Ok(t)
    }

    pub fn get(&self, lag: &LatticePoint) -> f64 {
        self.entries.get(lag).copied().unwrap_or(0.0)
    }

    /// `sum_j |Cov(X_0, X_j)| (|j_1| + ... + |j_d|)`.
    pub fn kappa_geo(&self) -> f64 {
        self.entries.iter().map(|(j, v)| v.abs() * j.l1_norm() as f64).sum()
    }

    /// Standard error of `sigma_sq` (zero when exact).
    pub fn sigma_sq_se(&self) -> f64 {
        self.se.values().map(|s| s * s).sum::<f64>().sqrt()
    }
}

fn overlap_ratio(w: &WeightFamily, lag: &LatticePoint, norm_sq: f64) -> f64 {
    w.translate_inner(lag) / norm_sq
}

/// `sum_j Cov(j) (<w, tau_j w> / |w|_2^2 - 1)`, so that
/// `Var(sum w_i X_i) / |w|_2^2 = sigma^2 + epsilon_n`.
pub fn epsilon_n(w: &WeightFamily, cov: &CovarianceTable) -> Result<f64> {
    if w.dim() != cov.dim {
        return Err(Error::DimensionMismatch { expected: cov.dim, found: w.dim() });
    }
    let n2 = w.norm_lq(2.0).powi(2);
    Ok(cov.entries.iter().map(|(j, c)| c * (overlap_ratio(w, j, n2) - 1.0)).sum())
}

/// `sum_j |Cov(j)| |<w, tau_j w> / |w|_2^2 - 1|`.
pub fn abs_epsilon_n(w: &WeightFamily, cov: &CovarianceTable) -> Result<f64> {
    if w.dim() != cov.dim {
        return Err(Error::DimensionMismatch { expected: cov.dim, found: w.dim() });
    }
    let n2 = w.norm_lq(2.0).powi(2);
    Ok(cov.entries.iter().map(|(j, c)| c.abs() * (overlap_ratio(w, j, n2) - 1.0).abs()).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceIdentityReport {
    /// `Var(S) / |w|_2^2`.
    pub lhs: f64,
    pub lhs_se: f64,
    pub sigma_sq: f64,
    pub eps_n: f64,
    pub rhs: f64,
    pub discrepancy: f64,
    pub relative: f64,
    pub exact: bool,
}

/// Compares `Var(S)/|w|^2` with `sigma^2 + epsilon_n`.
pub fn variance_identity_check(
    field: &Field,
    w: &WeightFamily,
    cov: &CovarianceTable,
    reps: u64,
    seed: u64,
) -> Result<VarianceIdentityReport> {
    let ws = WeightedSum::new(field, w)?;
    let n2 = w.norm_lq(2.0).powi(2);
    let (lhs, lhs_se, exact) = match ws.effective_sq_norm() {
        Some(c2) => (field.law().variance() * c2 / n2, 0.0, true),
        None => {
            let sq = replicate(reps, |r| ws.sample(InnovationStream::new(seed, r)).powi(2) / n2);
            let (m, se) = batch_mean_se(&sq, SE_BATCHES);
            (m, se, false)
        }
    };
    let eps = epsilon_n(w, cov)?;
    let rhs = cov.sigma_sq + eps;
    let discrepancy = lhs - rhs;
    Ok(VarianceIdentityReport {
        lhs,
        lhs_se,
        sigma_sq: cov.sigma_sq,
        eps_n: eps,
        rhs,
        discrepancy,
        relative: discrepancy.abs() / lhs.abs().max(f64::MIN_POSITIVE),
        exact,
    })
}

/// Left-hand side `sqrt(sigma^2 + eps_n) - 29/ln 2 * C_2 * (floor(|w|_2)^gamma)^{-alpha}`.
pub fn n0_lhs(sigma: f64, eps_n: f64, c2: f64, gamma: f64, alpha: f64, w_norm_l2: f64) -> f64 {
    let base = w_norm_l2.floor().powf(gamma);
    let correction = if c2 == 0.0 { 0.0 } else { 29.0 / std::f64::consts::LN_2 * c2 * base.powf(-alpha) };
    let v = sigma * sigma + eps_n;
    if v < 0.0 {
        return f64::NEG_INFINITY;
    }
    v.sqrt() - correction
}

/// Variance non-degeneracy condition at one `n`. The comparison with `sigma/2`
/// is strict, so exact ties are refused.
pub fn n0_condition(sigma: f64, eps_n: f64, c2: f64, gamma: f64, alpha: f64, w_norm_l2: f64) -> bool {
    sigma > 0.0 && n0_lhs(sigma, eps_n, c2, gamma, alpha, w_norm_l2) > sigma / 2.0
}

/// One candidate of an `n0` grid search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N0Candidate {
    pub n: u64,
    pub eps_n: f64,
    pub w_norm_l2: f64,
}

/// First `n` of the grid from which the condition holds at every later grid
/// point, or `None` ("not found up to the largest n").
pub fn n0_search(grid: &[N0Candidate], sigma: f64, c2: f64, gamma: f64, alpha: f64) -> Option<u64> {
    let ok: Vec<bool> = grid.iter().map(|g| n0_condition(sigma, g.eps_n, c2, gamma, alpha, g.w_norm_l2)).collect();
    let first_fail_from_end = ok.iter().rposition(|b| !b);
    match first_fail_from_end {
        None => grid.first().map(|g| g.n),
        Some(k) => grid.get(k + 1).map(|g| g.n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub p: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BoundParams {
    pub fn p_prime(&self) -> f64 {
        self.p.min(3.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0) {
            return Err(Error::InvalidParameter(format!("p = {} must exceed 2", self.p)));
        }
        for (name, v) in [("gamma", self.gamma), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Everything the Berry-Esseen bound depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenInputs {
    pub label: String,
    pub dim: usize,
    pub sigma: f64,
    pub eps_n: f64,
    pub c2: SeriesValue,
    pub cp: SeriesValue,
    /// `|X_0|_{p'}`.
    pub x0_norm: f64,
    pub w_l2: f64,
    pub w_lpprime: f64,
    pub w_lp: f64,
}

impl BerryEsseenInputs {
    pub fn assemble(
        label: impl Into<String>,
        profile: &DependenceProfile,
        cov: &CovarianceTable,
        w: &WeightFamily,
        params: &BoundParams,
        x0_norm: f64,
    ) -> Result<Self> {
        params.validate()?;
        if (profile.p - params.p).abs() > 0.0 {
            return Err(Error::MissingData(format!(
                "profile built for p = {}, bound requested at p = {}",
                profile.p, params.p
            )));
        }
        if cov.sigma_sq <= 0.0 {
            return Err(Error::ConditionFailed(format!("sigma^2 = {} is not positive", cov.sigma_sq)));
        }
        Ok(Self {
            label: label.into(),
            dim: profile.dim,
            sigma: cov.sigma_sq.sqrt(),
            eps_n: epsilon_n(w, cov)?,
            c2: series_constant(profile, Series::C2 { alpha: params.alpha }),
            cp: series_constant(profile, Series::Cp { beta: params.beta }),
            x0_norm,
            w_l2: w.norm_lq(2.0),
            w_lpprime: w.norm_lq(params.p_prime()),
            w_lp: w.norm_lq(params.p),
        })
    }
}

/// Itemized Berry-Esseen bound for one weight family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub label: String,
    pub dim: usize,
    pub p: f64,
    pub p_prime: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub c2: f64,
    pub cp: f64,
    pub c2_tail: String,
    pub cp_tail: String,
    pub w_l2: f64,
    pub w_lpprime: f64,
    pub w_lp: f64,
    pub x0_norm_pprime: f64,
    /// `(floor(|w|_2) + 1)^gamma`, the window of the m-dependent approximation.
    pub m: f64,
    pub eps_n: f64,
    pub n0_lhs: f64,
    pub n0_condition: bool,
    /// Term (I) with the `29 (floor|w|_2 + 21)^gamma + 21` prefactor.
    pub term_i: f64,
    /// Term (I) with the `20 m + 21` prefactor.
    pub term_i_window_form: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub total: f64,
}

/// Evaluates the three terms without checking the `n0` condition.
pub fn berry_esseen_terms(inputs: &BerryEsseenInputs, params: &BoundParams) -> Result<BoundReport> {
    params.validate()?;
    let BoundParams { p, gamma, alpha, beta } = *params;
    let pp = params.p_prime();
    let sigma = inputs.sigma;
    if !(sigma > 0.0) {
        return Err(Error::ConditionFailed(format!("sigma = {sigma} is not positive")));
    }
    let d = inputs.dim as f64;
    let jsz = jsz_constant(p)?;
    let fl = inputs.w_l2.floor();
    let c2 = inputs.c2.value;
    let cp = inputs.cp.value;
    let common = inputs.x0_norm.powf(pp) * (inputs.w_lpprime / inputs.w_l2).powf(pp) * (sigma / 2.0).powf(-pp);
    let pref = 29.0 * (fl + 21.0).powf(gamma) + 21.0;
    let term_i = 150.0 * pref.powf((pp - 1.0) * d) * common;
    let m = (fl + 1.0).powf(gamma);
    let term_i_window_form = 150.0 * (20.0 * m + 21.0).powf((pp - 1.0) * d) * common;
    let ln2 = std::f64::consts::LN_2;
    let term_ii = (2.0 * inputs.eps_n.abs() / (sigma * sigma)
        + 80.0 / ln2 * inputs.w_l2.powf(-gamma * alpha) * c2 * c2 / (sigma * sigma))
        / (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt();
    let e = p / (p + 1.0);
    let iii_a = (jsz / sigma * 4f64.powf(d / 2.0) * inputs.w_l2.powf(-gamma * alpha) * c2).powf(e);
    let iii_b = (inputs.w_lp / (sigma * inputs.w_l2) * jsz * 4f64.powf(d * (1.0 - 1.0 / p))
        * inputs.w_l2.powf(-gamma * beta)
        * cp)
        .powf(e);
    let term_iii = iii_a + iii_b;
    let lhs = n0_lhs(sigma, inputs.eps_n, c2, gamma, alpha, inputs.w_l2);
    let report = BoundReport {
        label: inputs.label.clone(),
        dim: inputs.dim,
        p,
        p_prime: pp,
        gamma,
        alpha,
        beta,
        sigma,
        c2,
        cp,
        c2_tail: format!("{:?}", inputs.c2.tail).to_lowercase(),
        cp_tail: format!("{:?}", inputs.cp.tail).to_lowercase(),
        w_l2: inputs.w_l2,
        w_lpprime: inputs.w_lpprime,
        w_lp: inputs.w_lp,
        x0_norm_pprime: inputs.x0_norm,
        m,
        eps_n: inputs.eps_n,
        n0_lhs: lhs,
        n0_condition: n0_condition(sigma, inputs.eps_n, c2, gamma, alpha, inputs.w_l2),
        term_i,
        term_i_window_form,
        term_ii,
        term_iii,
        total: term_i + term_ii + term_iii,
    };
    for (name, v) in [("term_i", term_i), ("term_ii", term_ii), ("term_iii", term_iii)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(report)
}

/// Certified Berry-Esseen bound; refuses when the `n0` condition fails.
pub fn berry_esseen_bound(inputs: &BerryEsseenInputs, params: &BoundParams) -> Result<BoundReport> {
    let report = berry_esseen_terms(inputs, params)?;
    if !report.n0_condition {
        return Err(Error::ConditionFailed(format!(
            "n0 condition fails for {}: sqrt(sigma^2 + eps_n) - 29/ln2 C2 floor(|b|)^(-gamma alpha) = {} <= sigma/2 = {} (C2 = {}, |b|_2 = {})",
            report.label,
            report.n0_lhs,
            report.sigma / 2.0,
            report.c2,
            report.w_l2
        )));
    }
    Ok(report)
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "schema_version,label,dim,p,p_prime,gamma,alpha,beta,sigma,c2,cp,c2_tail,cp_tail,w_l2,w_lpprime,w_lp,x0_norm_pprime,m,eps_n,n0_lhs,n0_condition,term_i,term_i_window_form,term_ii,term_iii,total";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            SCHEMA_VERSION,
            self.label,
            self.dim,
            self.p,
            self.p_prime,
            self.gamma,
            self.alpha,
            self.beta,
            self.sigma,
            self.c2,
            self.cp,
            self.c2_tail,
            self.cp_tail,
            self.w_l2,
            self.w_lpprime,
            self.w_lp,
            self.x0_norm_pprime,
            self.m,
            self.eps_n,
            self.n0_lhs,
            self.n0_condition,
            self.term_i,
            self.term_i_window_form,
            self.term_ii,
            self.term_iii,
            self.total
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Exponent `q` of `|Lambda|^q` for set-indexed sums.
pub fn set_indexed_exponent(params: &BoundParams, dim: usize) -> f64 {
    let BoundParams { p, gamma, alpha, beta } = *params;
    let pp = params.p_prime();
    let d = dim as f64;
    let a = (gamma * (pp - 1.0) * d - pp) / 2.0 + 1.0;
    let b = -gamma * alpha * p / (2.0 * (p + 1.0));
    let c = (2.0 - p - p * gamma * beta) / (2.0 * (p + 1.0));
    a.max(b).max(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetIndexedReport {
    pub exponent: f64,
    pub size: usize,
    /// `|Lambda|^q`.
    pub size_power: f64,
    /// `sum_j |Cov(j)| | |Lambda cap (Lambda - j)| / |Lambda| - 1 |`.
    pub overlap_series: f64,
    /// The weighted-sum bound on the indicator weights (n0 recorded inside).
    pub weighted: BoundReport,
}

pub fn set_indexed_bound(
    region: &IndexSet,
    cov: &CovarianceTable,
    profile: &DependenceProfile,
    params: &BoundParams,
    x0_norm: f64,
) -> Result<SetIndexedReport> {
    if region.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let w = region.to_weights();
    let size = region.len();
    let overlap_series = cov
        .entries
        .iter()
        .map(|(j, c)| c.abs() * (region.overlap(j) as f64 / size as f64 - 1.0).abs())
        .sum();
    let inputs = BerryEsseenInputs::assemble(format!("set-{size}"), profile, cov, &w, params, x0_norm)?;
    let exponent = set_indexed_exponent(params, region.dim());
    Ok(SetIndexedReport {
        exponent,
        size,
        size_power: (size as f64).powf(exponent),
        overlap_series,
        weighted: berry_esseen_terms(&inputs, params)?,
    })
}

/// Outcome of a series-convergence check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConditionVerdict {
    Holds,
    Fails,
    Inconclusive { truncation: u64 },
}

impl ConditionVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionVerdict::Holds)
    }
}

fn require_2d(family: &CoefficientFamily) -> Result<()> {
    if let CoefficientFamily::Explicit { entries } = family {
        if entries.iter().any(|e| e.at.len() != 2) {
            return Err(Error::InvalidParameter("coefficient conditions are stated for d = 2".into()));
        }
    }
    family.validate(2)
}

/// `sum_k (|k_1|+1)^2 (|k_2|+1)^2 a_k^2 < infinity`.
pub fn check_condition_mp(family: &CoefficientFamily) -> Result<ConditionVerdict> {
    require_2d(family)?;
    Ok(match family.decay() {
        Decay::FiniteSupport(_) | Decay::Geometric { .. } => ConditionVerdict::Holds,
        // sum_k (k+1)^4 k^{-2r}
        Decay::DiagonalPower { exponent } => {
            if 2.0 * exponent - 4.0 > 1.0 {
                ConditionVerdict::Holds
            } else {
                ConditionVerdict::Fails
            }
        }
    })
}

/// Exponent `s = max{1 + alpha, 2 - 2/p + beta}` of the shell series.
pub fn condition_g_exponent(p: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 + alpha).max(2.0 - 2.0 / p + beta)
}

/// `sum_i (i+1)^s (sum_{|j|_inf = i} a_j^2)^{1/2} < infinity`.
pub fn check_condition_g_exponent(family: &CoefficientFamily, s: f64) -> Result<ConditionVerdict> {
    require_2d(family)?;
    Ok(match family.decay() {
        Decay::FiniteSupport(_) | Decay::Geometric { .. } => ConditionVerdict::Holds,
        Decay::DiagonalPower { exponent } => {
            if exponent - s > 1.0 {
                ConditionVerdict::Holds
            } else {
                ConditionVerdict::Fails
            }
        }
    })
}

pub fn check_condition_g(family: &CoefficientFamily, p: f64, alpha: f64, beta: f64) -> Result<ConditionVerdict> {
    check_condition_g_exponent(family, condition_g_exponent(p, alpha, beta))
}

/// Shell-series check on a table of shell `l2` norms without a closed-form tail:
/// only a table ending in zeros is decided.
pub fn check_condition_g_table(shell_l2: &[f64], s: f64) -> ConditionVerdict {
    let _ = s;
    match shell_l2.last() {
        Some(v) if *v == 0.0 => ConditionVerdict::Holds,
        _ => ConditionVerdict::Inconclusive { truncation: shell_l2.len().saturating_sub(1) as u64 },
    }
}

/// Diagonal family `a_{k,k} = k^{-r}`, `k >= 1`.
pub fn counterexample_coeffs(r: f64) -> Result<CoefficientFamily> {
    let f = CoefficientFamily::Diagonal { exponent: r };
    f.validate(2)?;
    Ok(f)
}

/// Marginal `|X_0|_q` rounded into an `McEstimate` for report inputs.
pub fn x0_norm(field: &Field, q: f64, reps: u64, seed: u64) -> Result<McEstimate> {
    crate::dependence::marginal_norm(field, q, reps, seed)
}
