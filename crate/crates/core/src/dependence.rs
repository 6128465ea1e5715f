//! Physical dependence coefficients, shell aggregates, martingale-increment
//! norms and the series constants built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::model::{CoordFn, Repr};
use crate::fields::stream::StreamSource;
use crate::fields::{sample_coupled_pair, CoefficientFamily, Field, FieldKind, InnovationLaw, InnovationStream};
use crate::lattice::{shell_points, LatticePoint};
use crate::numeric::{lp_root_estimate, normal_abs_moment, replicate};

/// Batches used for every p-th moment standard error.
pub const SE_BATCHES: usize = 16;

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
    LemmaBound,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::MonteCarlo => "monte_carlo",
            Provenance::LemmaBound => "lemma_bound",
        }
    }
}

/// A profile value with its provenance; `se` is zero unless Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: f64,
    pub provenance: Provenance,
    pub se: f64,
}

impl Entry {
    fn analytic(value: f64) -> Self {
        Self { value, provenance: Provenance::Analytic, se: 0.0 }
    }
}

fn linear_coefficient(field: &Field, k: &LatticePoint) -> Option<f64> {
    match &field.model().kind {
        FieldKind::Linear { coefficients, .. } => {
            Some(if k.sup_norm() <= field.radius() { coefficients.coefficient(k) } else { 0.0 })
        }
        _ => None,
    }
}

fn coordinate_fn(field: &Field, k: &LatticePoint) -> Option<CoordFn> {
    match &field.repr {
        Repr::OneCoordinate { terms } => terms.iter().find(|(u, _)| u == k).map(|(_, f)| *f),
        _ => None,
    }
}

/// `|f(eps) - f(eps')|_p` for one coordinate map.
fn coord_delta(f: &CoordFn, law: &InnovationLaw, p: f64) -> Result<f64> {
    match *f {
        CoordFn::Indicator { scale, tail, norm, .. } => {
            // f(e) - f(e') takes the values +-scale/norm with probability 2P(1-P)
            Ok(scale.abs() / norm * (2.0 * tail * (1.0 - tail)).powf(1.0 / p))
        }
        CoordFn::Affine { scale } => Ok(scale.abs() * law.difference_norm(p)?),
        CoordFn::Square { scale, .. } => match law {
            // e^2 - e'^2 = (e - e')(e + e'), two independent N(0, 2) factors
            InnovationLaw::StandardNormal => Ok(scale.abs() * 2.0 * normal_abs_moment(p).powf(2.0 / p)),
            InnovationLaw::Rademacher => Ok(0.0),
            _ => Err(Error::AnalyticUnavailable(
                "centered-square coordinate map: use delta_mc for this law".into(),
            )),
        },
    }
}

/// `|f(eps)|_q` for one coordinate map, when available in closed form.
fn coord_norm(f: &CoordFn, law: &InnovationLaw, q: f64) -> Option<f64> {
    match *f {
        CoordFn::Indicator { scale, tail, norm, .. } => {
            let m = (1.0 - tail).powf(q) * tail + tail.powf(q) * (1.0 - tail);
            Some(scale.abs() / norm * m.powf(1.0 / q))
        }
        CoordFn::Affine { scale } => Some(scale.abs() * law.moment_norm(q)),
        CoordFn::Square { scale, mean } => {
            if q == 2.0 {
                law.abs_moment(4.0).ok().map(|m4| scale.abs() * (m4 - mean * mean).max(0.0).sqrt())
            } else {
                None
            }
        }
    }
}

/// `delta_{i,p}` in closed form for linear and one-coordinate fields.
pub fn delta_analytic(field: &Field, i: &LatticePoint, p: f64) -> Result<f64> {
    if i.dim() != field.dim() {
        return Err(Error::DimensionMismatch { expected: field.dim(), found: i.dim() });
    }
    if let Some(a) = linear_coefficient(field, i) {
        let dn = field.law().difference_norm(p)?;
        return Ok(a.abs() * dn);
    }
    match &field.repr {
        Repr::OneCoordinate { .. } => match coordinate_fn(field, i) {
            Some(f) => coord_delta(&f, field.law(), p),
            None => Ok(0.0),
        },
        _ => Err(Error::AnalyticUnavailable("finite-window field: use delta_mc".into())),
    }
}

fn check_reps(reps: u64) -> Result<()> {
    if reps < 2 {
        return Err(Error::InvalidParameter("at least 2 replications are required".into()));
    }
    Ok(())
}

/// Monte Carlo `delta_{i,q}` for each order in `orders`, all from the same
/// coupled draws.
pub fn delta_mc_orders(
    field: &Field,
    i: &LatticePoint,
    orders: &[f64],
    reps: u64,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    check_reps(reps)?;
    let diffs: Vec<f64> = replicate(reps, |r| {
        sample_coupled_pair(field, i, InnovationStream::new(seed, r)).map(|(x, y)| x - y)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    orders
        .iter()
        .map(|&q| {
            let pows: Vec<f64> = diffs.iter().map(|d| d.abs().powf(q)).collect();
            let (est, se) = lp_root_estimate(&pows, q, SE_BATCHES);
            if !est.is_finite() || !se.is_finite() {
                return Err(Error::NonFinite(format!(
                    "order-{q} sample moment overflowed (innovation tail index {})",
                    field.law().tail_index()
                )));
            }
            Ok(McEstimate { estimate: est, se })
        })
        .collect()
}

pub fn delta_mc(field: &Field, i: &LatticePoint, p: f64, reps: u64, seed: u64) -> Result<McEstimate> {
    Ok(delta_mc_orders(field, i, &[p], reps, seed)?[0])
}

/// `S_q(j)` from a table of `delta_{i,q}` that must cover the whole shell.
pub fn shell_sum(deltas: &BTreeMap<LatticePoint, f64>, j: u64, dim: usize) -> Result<f64> {
    let mut acc = 0.0;
    for k in shell_points(j, dim)? {
        match deltas.get(&k) {
            Some(d) => acc += d * d,
            None => return Err(Error::MissingData(format!("delta missing at shell point {k}"))),
        }
    }
    Ok(acc.sqrt())
}

/// `S_q(j)` in closed form.
pub fn shell_sum_analytic(field: &Field, j: u64, q: f64) -> Result<f64> {
    let dim = field.dim();
    if j > field.radius() {
        return Ok(0.0);
    }
    match (&field.model().kind, &field.repr) {
        (FieldKind::Linear { coefficients, .. }, _) => {
            Ok(coefficients.shell_sq_sum(j, dim).sqrt() * field.law().difference_norm(q)?)
        }
        (_, Repr::OneCoordinate { terms }) => {
            let mut acc = 0.0;
            for (k, f) in terms.iter().filter(|(k, _)| k.sup_norm() == j) {
                let _ = k;
                acc += coord_delta(f, field.law(), q)?.powi(2);
            }
            Ok(acc.sqrt())
        }
        _ => Err(Error::AnalyticUnavailable("finite-window field: use delta_mc".into())),
    }
}

/// Upper bound `sqrt(2(q-1)) S_q(j)` for `|X_{0,j}|_q`.
pub fn martingale_norm_bound(shell: f64, q: f64) -> Result<f64> {
    if !(q >= 2.0) {
        return Err(Error::InvalidParameter(format!("order {q} must be at least 2")));
    }
    Ok((2.0 * (q - 1.0)).sqrt() * shell)
}

/// `|X_{0,j}|_q` when it is known in closed form.
pub fn martingale_norm_exact(field: &Field, j: u64, q: f64) -> Option<f64> {
    let law = field.law();
    if j > field.radius() {
        return Some(0.0);
    }
    match (&field.model().kind, &field.repr) {
        (FieldKind::Linear { coefficients, .. }, _) => {
            let sq = coefficients.shell_sq_sum(j, field.dim());
            if sq == 0.0 {
                return Some(0.0);
            }
            let single = match coefficients {
                CoefficientFamily::Diagonal { .. } => true,
                CoefficientFamily::Geometric { .. } => j == 0,
                CoefficientFamily::Explicit { .. } => coefficients
                    .support(j, field.dim())
                    .iter()
                    .filter(|(k, _)| k.sup_norm() == j)
                    .count()
                    == 1,
            };
            if q == 2.0 {
                Some(sq.sqrt() * law.variance().sqrt())
            } else if single || *law == InnovationLaw::StandardNormal {
                let m = law.moment_norm(q);
                m.is_finite().then(|| sq.sqrt() * m)
            } else {
                None
            }
        }
        (_, Repr::OneCoordinate { terms }) => {
            let shell: Vec<&CoordFn> = terms.iter().filter(|(k, _)| k.sup_norm() == j).map(|(_, f)| f).collect();
            if shell.len() == 1 {
                coord_norm(shell[0], law, q)
            } else if q == 2.0 {
                shell.iter().map(|f| coord_norm(f, law, 2.0).map(|v| v * v)).sum::<Option<f64>>().map(f64::sqrt)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Monte Carlo estimate of `|X_{0,j}|_q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleEstimate {
    pub estimate: f64,
    pub se: f64,
    /// Root-mean-square inner standard error of the conditional expectations.
    pub inner_se: f64,
    /// Set when `inner_se` exceeds 10% of the estimate.
    pub inner_reps_too_small: bool,
}

pub fn martingale_norm_mc(
    field: &Field,
    j: u64,
    q: f64,
    outer_reps: u64,
    inner_reps: usize,
    seed: u64,
) -> Result<MartingaleEstimate> {
    check_reps(outer_reps)?;
    let origin = LatticePoint::origin(field.dim());
    let draws: Vec<(f64, f64)> = replicate(outer_reps, |r| -> Result<(f64, f64)> {
        let stream = InnovationStream::new(seed, r);
        let src = StreamSource::main(stream, *field.law());
        let (hi, se_hi) = field.conditional_or_resampled(&origin, j, &src, stream, inner_reps, 0)?;
        let (lo, se_lo) = if j == 0 {
            (0.0, 0.0)
        } else {
            field.conditional_or_resampled(&origin, j - 1, &src, stream, inner_reps, inner_reps as u64)?
        };
        Ok((hi - lo, se_hi * se_hi + se_lo * se_lo))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let pows: Vec<f64> = draws.iter().map(|(v, _)| v.abs().powf(q)).collect();
    let (estimate, se) = lp_root_estimate(&pows, q, SE_BATCHES);
    if !estimate.is_finite() {
        return Err(Error::NonFinite(format!("order-{q} increment moment overflowed")));
    }
    let inner_se = (draws.iter().map(|(_, v)| v).sum::<f64>() / draws.len() as f64).sqrt();
    Ok(MartingaleEstimate {
        estimate,
        se,
        inner_se,
        inner_reps_too_small: inner_se > 0.1 * estimate,
    })
}

/// `|X_0|_q`: closed form when available, otherwise Monte Carlo.
pub fn marginal_norm(field: &Field, q: f64, reps: u64, seed: u64) -> Result<McEstimate> {
    if let Some(v) = field.marginal_norm_exact(q) {
        return Ok(McEstimate { estimate: v, se: 0.0 });
    }
    check_reps(reps)?;
    let origin = LatticePoint::origin(field.dim());
    let pows = replicate(reps, |r| {
        let src = StreamSource::main(InnovationStream::new(seed, r), *field.law());
        field.value_at(&origin, &src).abs().powf(q)
    });
    let (estimate, se) = lp_root_estimate(&pows, q, SE_BATCHES);
    if !estimate.is_finite() {
        return Err(Error::NonFinite(format!("order-{q} marginal moment overflowed")));
    }
    Ok(McEstimate { estimate, se })
}

/// How `N_q(j)` entries are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPolicy {
    /// Closed form where available, otherwise Monte Carlo.
    Direct,
    /// `sqrt(2(q-1)) S_q(j)` on every shell.
    LemmaBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub norms: NormPolicy,
    /// Cap on the number of shells estimated by Monte Carlo.
    pub max_mc_shells: u64,
    /// Cap on analytic shells.
    pub max_analytic_shells: u64,
    pub relative_cutoff: f64,
    pub mc_reps: u64,
    pub inner_reps: usize,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            norms: NormPolicy::Direct,
            max_mc_shells: 64,
            max_analytic_shells: 4096,
            relative_cutoff: 1e-12,
            mc_reps: 10_000,
            inner_reps: 256,
            seed: 0x5EED,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRecord {
    pub shell: u64,
    pub s2: Entry,
    pub sp: Entry,
    pub n2: Entry,
    pub np: Entry,
}

/// Per-shell dependence data of one field at moment order `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceProfile {
    pub dim: usize,
    pub p: f64,
    pub norms: NormPolicy,
    /// Last retained shell `J`.
    pub truncation: u64,
    /// Shells past `J` are dropped when `N(j) <= relative_cutoff * max N`.
    pub relative_cutoff: f64,
    /// True when the field has nonzero shells beyond the retained range.
    pub tail_omitted: bool,
    pub shells: Vec<ShellRecord>,
}

fn shell_entries_mc(field: &Field, j: u64, p: f64, opts: &ProfileOptions) -> Result<(Entry, Entry)> {
    let mut acc = [0.0f64; 2];
    let mut var = [0.0f64; 2];
    for (n, k) in shell_points(j, field.dim())?.iter().enumerate() {
        let seed = opts.seed ^ (j << 40) ^ ((n as u64) << 8);
        let est = delta_mc_orders(field, k, &[2.0, p], opts.mc_reps, seed)?;
        for t in 0..2 {
            acc[t] += est[t].estimate.powi(2);
            var[t] += (est[t].estimate * est[t].se).powi(2);
        }
    }
    let mk = |t: usize| {
        let v = acc[t].sqrt();
        Entry {
            value: v,
            provenance: Provenance::MonteCarlo,
            se: if v > 0.0 { var[t].sqrt() / v } else { 0.0 },
        }
    };
    Ok((mk(0), mk(1)))
}

fn norm_entry(field: &Field, j: u64, q: f64, s: &Entry, opts: &ProfileOptions) -> Result<Entry> {
    match opts.norms {
        NormPolicy::LemmaBound => {
            let f = (2.0 * (q - 1.0)).sqrt();
            Ok(Entry { value: f * s.value, provenance: Provenance::LemmaBound, se: f * s.se })
        }
        NormPolicy::Direct => match martingale_norm_exact(field, j, q) {
            Some(v) => Ok(Entry::analytic(v)),
            None => {
                let seed = opts.seed ^ 0xA5A5_0000 ^ (j << 40) ^ (q.to_bits() >> 20);
                let m = martingale_norm_mc(field, j, q, opts.mc_reps, opts.inner_reps, seed)?;
                Ok(Entry { value: m.estimate, provenance: Provenance::MonteCarlo, se: m.se.hypot(m.inner_se) })
            }
        },
    }
}

impl DependenceProfile {
    pub fn build(field: &Field, p: f64, opts: &ProfileOptions) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::InvalidParameter(format!("moment order {p} must be at least 2")));
        }
        let analytic = shell_sum_analytic(field, 0, p).is_ok() && shell_sum_analytic(field, 0, 2.0).is_ok();
        let cap = if analytic { opts.max_analytic_shells } else { opts.max_mc_shells };
        let last = field.radius().min(cap);
        let mut shells = Vec::new();
        for j in 0..=last {
            let (s2, sp) = if analytic {
                (Entry::analytic(shell_sum_analytic(field, j, 2.0)?), Entry::analytic(shell_sum_analytic(field, j, p)?))
            } else {
                shell_entries_mc(field, j, p, opts)?
            };
            let n2 = norm_entry(field, j, 2.0, &s2, opts)?;
            let np = norm_entry(field, j, p, &sp, opts)?;
            shells.push(ShellRecord { shell: j, s2, sp, n2, np });
        }
        let size = |r: &ShellRecord| r.n2.value.max(r.np.value).max(r.s2.value).max(r.sp.value);
        let peak = shells.iter().map(size).fold(0.0, f64::max);
        let keep = shells.iter().rposition(|r| size(r) > opts.relative_cutoff * peak).unwrap_or(0);
        shells.truncate(keep + 1);
        Ok(Self {
            dim: field.dim(),
            p,
            norms: opts.norms,
            truncation: keep as u64,
            relative_cutoff: opts.relative_cutoff,
            tail_omitted: field.radius() > last,
            shells,
        })
    }

    /// Profile from explicit per-shell values (`s2, sp, n2, np`).
    pub fn from_values(dim: usize, p: f64, rows: &[(f64, f64, f64, f64)], provenance: Provenance) -> Self {
        let e = |v: f64| Entry { value: v, provenance, se: 0.0 };
        let shells: Vec<ShellRecord> = rows
            .iter()
            .enumerate()
            .map(|(j, r)| ShellRecord { shell: j as u64, s2: e(r.0), sp: e(r.1), n2: e(r.2), np: e(r.3) })
            .collect();
        Self {
            dim,
            p,
            norms: if provenance == Provenance::LemmaBound { NormPolicy::LemmaBound } else { NormPolicy::Direct },
            truncation: shells.len().saturating_sub(1) as u64,
            relative_cutoff: 0.0,
            tail_omitted: false,
            shells,
        }
    }

    /// CSV with columns `shell,S2,Sp,N2,Np,provenance,se`; provenance and se
    /// list the four entries in column order, separated by `|`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shell,S2,Sp,N2,Np,provenance,se\n");
        for r in &self.shells {
            let es = [r.s2, r.sp, r.n2, r.np];
            let prov: Vec<&str> = es.iter().map(|e| e.provenance.as_str()).collect();
            let se: Vec<String> = es.iter().map(|e| e.se.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.shell,
                r.s2.value,
                r.sp.value,
                r.n2.value,
                r.np.value,
                prov.join("|"),
                se.join("|")
            );
        }
        out
    }
}

/// Which series constant to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "which", rename_all = "snake_case")]
pub enum Series {
    /// `sum (i+1)^{d/2+alpha} N_2(i)`.
    C2 { alpha: f64 },
    /// `sum (i+1)^{d(1-1/p)+beta} N_p(i)`.
    Cp { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFlag {
    /// All terms past some shell vanish.
    FiniteSupport,
    /// The last terms shrink geometrically.
    Geometric,
    /// Power-law terms with log-log slope below -1.1.
    PowerConvergent,
    /// Terms do not decay fast enough at the truncation boundary.
    Divergent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail: TailFlag,
}

fn series_terms(profile: &DependenceProfile, which: Series, upto: u64) -> Vec<f64> {
    let d = profile.dim as f64;
    profile
        .shells
        .iter()
        .take_while(|r| r.shell <= upto)
        .map(|r| {
            let i1 = r.shell as f64 + 1.0;
            match which {
                Series::C2 { alpha } => i1.powf(0.5 * d + alpha) * r.n2.value,
                Series::Cp { beta } => i1.powf(d * (1.0 - 1.0 / profile.p) + beta) * r.np.value,
            }
        })
        .collect()
}

fn tail_flag(terms: &[f64], tail_omitted: bool) -> TailFlag {
    let n = terms.len();
    if n == 0 || (!tail_omitted && terms[n - 1] == 0.0) {
        return TailFlag::FiniteSupport;
    }
    if n >= 3 {
        let (a, b, c) = (terms[n - 3], terms[n - 2], terms[n - 1]);
        if a > 0.0 && b > 0.0 && b / a <= 0.95 && c / b <= 0.95 {
            return TailFlag::Geometric;
        }
    }
    // log-log slope over the last quarter of positive terms
    let pts: Vec<(f64, f64)> = terms
        .iter()
        .enumerate()
        .skip(n - (n / 4).max(3).min(n))
        .filter(|(_, t)| **t > 0.0)
        .map(|(i, t)| (((i + 1) as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return if tail_omitted { TailFlag::Divergent } else { TailFlag::FiniteSupport };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope < -1.1 {
        TailFlag::PowerConvergent
    } else {
        TailFlag::Divergent
    }
}

/// `C_2(alpha)` or `C_p(beta)` summed over the retained shells.
pub fn series_constant(profile: &DependenceProfile, which: Series) -> SeriesValue {
    series_constant_upto(profile, which, u64::MAX)
}

/// Partial sum over shells `0..=upto`.
pub fn series_constant_upto(profile: &DependenceProfile, which: Series, upto: u64) -> SeriesValue {
    let terms = series_terms(profile, which, upto);
    let cut_short = upto < profile.truncation;
    SeriesValue { value: terms.iter().sum(), tail: tail_flag(&terms, profile.tail_omitted || cut_short) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{example_ratio_field, CoefficientEntry, FieldModel, WindowFunction};

    fn geometric(dim: usize) -> Field {
        FieldModel::linear(dim, InnovationLaw::StandardNormal, CoefficientFamily::Geometric { rate: 0.5, scale: 1.0 })
            .prepare()
            .unwrap()
    }

    #[test]
    fn delta_examples() {
        let iid = FieldModel::iid(1, InnovationLaw::Rademacher).prepare().unwrap();
        let o = LatticePoint::origin(1);
        assert!((delta_analytic(&iid, &o, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(delta_analytic(&iid, &LatticePoint::new(&[3]).unwrap(), 2.0).unwrap(), 0.0);
        let g = geometric(1);
        for k in 0..5i64 {
            let v = delta_analytic(&g, &LatticePoint::new(&[k]).unwrap(), 2.0).unwrap();
            assert!((v - 0.5f64.powi(k as i32) * 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_mc_agrees_with_analytic() {
        let g = geometric(2);
        let k = LatticePoint::new(&[1, 0]).unwrap();
        let exact = delta_analytic(&g, &k, 3.0).unwrap();
        let mc = delta_mc(&g, &k, 3.0, 20_000, 3).unwrap();
        assert!((mc.estimate - exact).abs() < 3.0 * mc.se, "{mc:?} vs {exact}");
        let far = LatticePoint::new(&[g.radius() as i64 + 2, 0]).unwrap();
        let z = delta_mc(&g, &far, 3.0, 100, 3).unwrap();
        assert_eq!((z.estimate, z.se), (0.0, 0.0));
    }

    #[test]
    fn shell_sums() {
        let diag = FieldModel::linear(2, InnovationLaw::StandardNormal, CoefficientFamily::Diagonal { exponent: 3.0 })
            .prepare()
            .unwrap();
        for j in 1..6u64 {
            let v = shell_sum_analytic(&diag, j, 2.0).unwrap();
            let expected = (j as f64).powf(-3.0) * 2f64.sqrt();
            assert!((v - expected).abs() < 1e-14 * expected);
            let table: BTreeMap<LatticePoint, f64> = shell_points(j, 2)
                .unwrap()
                .into_iter()
                .map(|k| {
                    let d = delta_analytic(&diag, &k, 2.0).unwrap();
                    (k, d)
                })
                .collect();
            assert!((shell_sum(&table, j, 2).unwrap() - expected).abs() < 1e-14 * expected);
        }
        let g = geometric(1);
        for j in 1..6u64 {
            let v = shell_sum_analytic(&g, j, 2.0).unwrap();
            let expected = (2.0 * (0.5f64.powi(j as i32) * 2f64.sqrt()).powi(2)).sqrt();
            assert!((v - expected).abs() < 1e-14);
        }
        assert!(shell_sum(&BTreeMap::new(), 1, 2).is_err());
    }

    #[test]
    fn lemma_bound_examples() {
        assert!((martingale_norm_bound(1.0, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(martingale_norm_bound(0.0, 3.0).unwrap(), 0.0);
        assert!(martingale_norm_bound(1.0, 1.5).is_err());
        let iid = FieldModel::iid(2, InnovationLaw::UniformCentered).prepare().unwrap();
        let exact = martingale_norm_exact(&iid, 0, 2.0).unwrap();
        let bound = martingale_norm_bound(shell_sum_analytic(&iid, 0, 2.0).unwrap(), 2.0).unwrap();
        assert!((exact - 1.0).abs() < 1e-15 && (bound - 2.0).abs() < 1e-14);
    }

    #[test]
    fn martingale_mc_for_quadratic_window() {
        // X = (e_0 + 0.5 e_{-1})^2 - 1.25: X_{0,0} = e_0^2 - 1, X_{0,1} = e_0 e_{-1} + 0.25(e_{-1}^2 - 1)
        let model = FieldModel {
            dim: 1,
            law: InnovationLaw::StandardNormal,
            kind: FieldKind::FiniteWindow {
                function: WindowFunction::Quadratic {
                    coefficients: vec![
                        CoefficientEntry { at: vec![0], value: 1.0 },
                        CoefficientEntry { at: vec![1], value: 0.5 },
                    ],
                },
            },
        };
        let f = model.prepare().unwrap();
        let m0 = martingale_norm_mc(&f, 0, 2.0, 4000, 64, 1).unwrap();
        // |e^2 - 1|_2 = sqrt 2, inflated slightly by inner noise
        assert!((m0.estimate - 2f64.sqrt()).abs() < 4.0 * m0.se + 2.0 * m0.inner_se, "{m0:?}");
        let m1 = martingale_norm_mc(&f, 1, 2.0, 4000, 64, 2).unwrap();
        let exact1 = (1.0f64 + 0.0625 * 2.0).sqrt();
        assert!((m1.estimate - exact1).abs() < 4.0 * m1.se + 2.0 * m1.inner_se, "{m1:?}");
        assert_eq!(martingale_norm_exact(&f, 2, 2.0), Some(0.0));
    }

    #[test]
    fn ratio_field_ratio_grows() {
        let f = example_ratio_field(4.0, 1).unwrap().prepare().unwrap();
        let mut prev = 0.0;
        for k in 1..=10i64 {
            let pt = LatticePoint::new(&[k]).unwrap();
            let r = delta_analytic(&f, &pt, 4.0).unwrap() / delta_analytic(&f, &pt, 2.0).unwrap();
            assert!(r > prev);
            prev = r;
        }
        assert!(prev > 10.0, "{prev}");
    }

    #[test]
    fn profile_and_series() {
        let g = geometric(1);
        let prof = DependenceProfile::build(&g, 3.0, &ProfileOptions::default()).unwrap();
        assert!(prof.shells.iter().all(|r| r.n2.provenance == Provenance::Analytic));
        let c2 = series_constant(&prof, Series::C2 { alpha: 0.5 });
        // reference: N_2(0) = 1, N_2(j) = sqrt 2 2^{-j}
        let reference: f64 = 1.0 + (1..200).map(|j| ((j + 1) as f64).powf(1.0) * 2f64.sqrt() * 0.5f64.powi(j)).sum::<f64>();
        assert!((c2.value - reference).abs() < 1e-6, "{} vs {reference}", c2.value);
        let lemma = DependenceProfile::build(&g, 3.0, &ProfileOptions { norms: NormPolicy::LemmaBound, ..Default::default() })
            .unwrap();
        for r in &lemma.shells {
            assert_eq!(r.n2.value, 2f64.sqrt() * r.s2.value);
            assert_eq!(r.np.value, 2.0 * r.sp.value);
        }
        let csv = prof.to_csv();
        assert!(csv.starts_with("shell,S2,Sp,N2,Np,provenance,se\n"));
        let mut prev = 0.0;
        for j in 0..prof.truncation {
            let v = series_constant_upto(&prof, Series::C2 { alpha: 0.5 }, j).value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn single_shell_constant_and_divergence_flag() {
        let prof = DependenceProfile::from_values(2, 3.0, &[(1.0, 1.0, 0.7, 0.9)], Provenance::Analytic);
        assert_eq!(series_constant(&prof, Series::C2 { alpha: 4.0 }).value, 0.7);
        let diag = FieldModel::linear(2, InnovationLaw::StandardNormal, CoefficientFamily::Diagonal { exponent: 2.2 })
            .prepare()
            .unwrap();
        let prof = DependenceProfile::build(&diag, 3.0, &ProfileOptions::default()).unwrap();
        // terms (i+1)^{1+alpha} i^{-2.2}: divergent when 1 + alpha >= 1.2
        assert_eq!(series_constant(&prof, Series::C2 { alpha: 0.3 }).tail, TailFlag::Divergent);
        let diag3 = FieldModel::linear(2, InnovationLaw::StandardNormal, CoefficientFamily::Diagonal { exponent: 3.0 })
            .prepare()
            .unwrap();
        let prof = DependenceProfile::build(&diag3, 3.0, &ProfileOptions::default()).unwrap();
        assert_eq!(series_constant(&prof, Series::C2 { alpha: 0.05 }).tail, TailFlag::PowerConvergent);
    }
}
