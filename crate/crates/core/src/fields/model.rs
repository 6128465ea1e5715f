use serde::{Deserialize, Serialize};

use super::law::InnovationLaw;
use super::stream::{ExteriorResampled, InnovationSource, InnovationStream, StreamSource, SUBSTREAM_EXTERIOR};
use crate::error::{Error, Result};
use crate::lattice::{ball_points, LatticePoint};
use crate::numeric::{normal_two_sided_tail, phi_inv, power_tail_sum};

/// Default relative budget for the truncated `l2` tail of linear coefficients.
pub const DEFAULT_TAIL_BUDGET: f64 = 1e-8;

/// One explicit lattice coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub at: Vec<i64>,
    pub value: f64,
}

/// Square-summable coefficient families `a_k` on `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoefficientFamily {
    Explicit { entries: Vec<CoefficientEntry> },
    /// `a_k = scale * rate^{|k|_1}`.
    Geometric {
        rate: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Two-dimensional diagonal family `a_{k,k} = k^{-exponent}` for `k >= 1`.
    Diagonal { exponent: f64 },
}

fn one() -> f64 {
    1.0
}

/// How the shell norms of a coefficient family decay, when known in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    FiniteSupport(u64),
    Geometric { rate: f64 },
    /// Shell `l2` norms equal `j^{-exponent}` along the diagonal.
    DiagonalPower { exponent: f64 },
}

impl CoefficientFamily {
    pub fn identity(dim: usize) -> Self {
        CoefficientFamily::Explicit {
            entries: vec![CoefficientEntry { at: vec![0; dim], value: 1.0 }],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            CoefficientFamily::Explicit { entries } => {
                if entries.is_empty() {
                    return Err(Error::InvalidParameter("explicit coefficient list is empty".into()));
                }
                for e in entries {
                    if e.at.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, found: e.at.len() });
                    }
                    if !e.value.is_finite() {
                        return Err(Error::InvalidParameter("non-finite coefficient".into()));
                    }
                }
            }
            CoefficientFamily::Geometric { rate, scale } => {
                if !(*rate > 0.0 && *rate < 1.0) || !scale.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "geometric rate {rate} must lie in (0, 1)"
                    )));
                }
            }
            CoefficientFamily::Diagonal { exponent } => {
                if dim != 2 {
                    return Err(Error::InvalidParameter("diagonal family is two-dimensional".into()));
                }
                if !(*exponent > 0.5) {
                    return Err(Error::InvalidParameter(format!(
                        "diagonal exponent {exponent} must exceed 1/2 for square summability"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, k: &LatticePoint) -> f64 {
        match self {
            CoefficientFamily::Explicit { entries } => entries
                .iter()
                .filter(|e| e.at.as_slice() == k.coords())
                .map(|e| e.value)
                .sum(),
            CoefficientFamily::Geometric { rate, scale } => scale * rate.powi(k.l1_norm() as i32),
            CoefficientFamily::Diagonal { exponent } => {
                let c = k.coords();
                if c[0] == c[1] && c[0] >= 1 {
                    (c[0] as f64).powf(-exponent)
                } else {
                    0.0
                }
            }
        }
    }

    /// `sum_{|k|_inf = j} a_k^2`.
    pub fn shell_sq_sum(&self, j: u64, dim: usize) -> f64 {
        match self {
            CoefficientFamily::Explicit { entries } => {
                let mut acc = std::collections::BTreeMap::new();
                for e in entries {
                    *acc.entry(e.at.clone()).or_insert(0.0) += e.value;
                }
                acc.iter()
                    .filter(|(k, _)| k.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) == j)
                    .map(|(_, v)| v * v)
                    .sum()
            }
            CoefficientFamily::Geometric { rate, scale } => {
                let r2 = rate * rate;
                let b = |j: i64| -> f64 {
                    if j < 0 {
                        0.0
                    } else {
                        1.0 + 2.0 * r2 * (1.0 - r2.powi(j as i32)) / (1.0 - r2)
                    }
                };
                let hi = b(j as i64);
                let lo = b(j as i64 - 1);
                let gap = if j == 0 { 1.0 } else { 2.0 * r2.powi(j as i32) };
                scale * scale * gap * power_difference_factor(hi, lo, dim)
            }
            CoefficientFamily::Diagonal { exponent } => {
                if j == 0 {
                    0.0
                } else {
                    (j as f64).powf(-2.0 * exponent)
                }
            }
        }
    }

    pub fn total_sq(&self, dim: usize) -> f64 {
        match self {
            CoefficientFamily::Explicit { .. } => {
                (0..=self.explicit_radius()).map(|j| self.shell_sq_sum(j, dim)).sum()
            }
            CoefficientFamily::Geometric { rate, scale } => {
                let r2 = rate * rate;
                scale * scale * ((1.0 + r2) / (1.0 - r2)).powi(dim as i32)
            }
            CoefficientFamily::Diagonal { exponent } => power_tail_sum(2.0 * exponent, 1),
        }
    }

    /// `sum_{|k|_inf > radius} a_k^2`, computed without cancellation.
    pub fn tail_sq(&self, radius: u64, dim: usize) -> f64 {
        match self {
            CoefficientFamily::Explicit { .. } => {
                let top = self.explicit_radius();
                (radius + 1..=top).map(|j| self.shell_sq_sum(j, dim)).sum()
            }
            CoefficientFamily::Geometric { rate, scale } => {
                let r2 = rate * rate;
                let total = (1.0 + r2) / (1.0 - r2);
                let inner = total - 2.0 * r2.powi(radius as i32 + 1) / (1.0 - r2);
                let gap = 2.0 * r2.powi(radius as i32 + 1) / (1.0 - r2);
                scale * scale * gap * power_difference_factor(total, inner, dim)
            }
            CoefficientFamily::Diagonal { exponent } => power_tail_sum(2.0 * exponent, radius + 1),
        }
    }

    fn explicit_radius(&self) -> u64 {
        match self {
            CoefficientFamily::Explicit { entries } => entries
                .iter()
                .map(|e| e.at.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0))
                .max()
                .unwrap_or(0),
            _ => u64::MAX,
        }
    }

    pub fn decay(&self) -> Decay {
        match self {
            CoefficientFamily::Explicit { .. } => Decay::FiniteSupport(self.explicit_radius()),
            CoefficientFamily::Geometric { rate, .. } => Decay::Geometric { rate: *rate },
            CoefficientFamily::Diagonal { exponent } => Decay::DiagonalPower { exponent: *exponent },
        }
    }

    /// Nonzero coefficients with `|k|_inf <= radius`, in lexicographic order.
    pub fn support(&self, radius: u64, dim: usize) -> Vec<(LatticePoint, f64)> {
        match self {
            CoefficientFamily::Diagonal { exponent } => (1..=radius as i64)
                .map(|k| (LatticePoint::new(&[k, k]).expect("2d"), (k as f64).powf(-exponent)))
                .collect(),
            CoefficientFamily::Explicit { .. } => {
                let r = radius.min(self.explicit_radius());
                ball_points(r, dim)
                    .into_iter()
                    .map(|k| {
                        let a = self.coefficient(&k);
                        (k, a)
                    })
                    .filter(|(_, a)| *a != 0.0)
                    .collect()
            }
            CoefficientFamily::Geometric { .. } => ball_points(radius, dim)
                .into_iter()
                .map(|k| {
                    let a = self.coefficient(&k);
                    (k, a)
                })
                .filter(|(_, a)| *a != 0.0)
                .collect(),
        }
    }

    /// Smallest radius whose tail `l2` norm is within `budget` times the total.
    pub fn default_radius(&self, dim: usize, budget: f64) -> u64 {
        if let CoefficientFamily::Explicit { .. } = self {
            return self.explicit_radius();
        }
        let total = self.total_sq(dim).sqrt();
        let ok = |r: u64| self.tail_sq(r, dim).max(0.0).sqrt() <= budget * total;
        let mut hi = 1u64;
        while !ok(hi) {
            hi *= 2;
        }
        let mut lo = 0u64;
        if ok(0) {
            return 0;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// `(x^d - y^d) / (x - y)` evaluated as `sum_t x^t y^{d-1-t}`.
fn power_difference_factor(x: f64, y: f64, dim: usize) -> f64 {
    (0..dim).map(|t| x.powi(t as i32) * y.powi((dim - 1 - t) as i32)).sum()
}

/// Scalar maps applied coordinate-wise in one-coordinate fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMap {
    Identity,
    /// `e^2 - E e^2`.
    CenteredSquare,
}

/// Families `f_k` for fields `X_n = sum_k f_k(eps_{n-k})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoordinateFamily {
    /// `f_k(e) = decay^{|k|} g_{|k|}(e)` with
    /// `g_j(e) = (1{|e| > t_j} - P_j) / sqrt(P_j (1 - P_j))` and
    /// `P_j = first_tail * tail_ratio^j`. Standard normal innovations only.
    ThresholdIndicator {
        decay: f64,
        #[serde(default = "default_first_tail")]
        first_tail: f64,
        #[serde(default = "default_tail_ratio")]
        tail_ratio: f64,
    },
    /// `f_k(e) = a_k * map(e)`.
    Scaled { coefficients: CoefficientFamily, map: ScalarMap },
}

fn default_first_tail() -> f64 {
    0.5
}

fn default_tail_ratio() -> f64 {
    0.25
}

/// Local functions of the innovations in a finite window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum WindowFunction {
    /// `X_n = eps_n^2 - E eps^2`.
    CenteredSquare,
    /// `X_n = (sum_u c_u eps_{n-u})^2 - Var(eps) sum_u c_u^2`.
    Quadratic { coefficients: Vec<CoefficientEntry> },
    /// `X_n = eps_n * eps_{n-offset}`.
    Product { offset: Vec<i64> },
}

/// Declarative description of a Bernoulli field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub dim: usize,
    pub law: InnovationLaw,
    pub kind: FieldKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldKind {
    Linear {
        coefficients: CoefficientFamily,
        #[serde(default)]
        truncation: Option<u64>,
        #[serde(default)]
        tail_budget: Option<f64>,
    },
    OneCoordinate { family: CoordinateFamily, radius: u64 },
    FiniteWindow { function: WindowFunction },
}

impl FieldModel {
    pub fn linear(dim: usize, law: InnovationLaw, coefficients: CoefficientFamily) -> Self {
        Self { dim, law, kind: FieldKind::Linear { coefficients, truncation: None, tail_budget: None } }
    }

    pub fn iid(dim: usize, law: InnovationLaw) -> Self {
        Self::linear(dim, law, CoefficientFamily::identity(dim))
    }

    pub fn prepare(&self) -> Result<Field> {
        Field::new(self.clone())
    }
}

/// The one-coordinate field whose ratio `delta_{k,p} / delta_{k,2}` is
/// unbounded: indicator tails at thresholds going to infinity, scaled by
/// `2^{-|k|}`, under standard normal innovations.
pub fn example_ratio_field(p: f64, dim: usize) -> Result<FieldModel> {
    if !(p > 2.0) {
        return Err(Error::InvalidParameter(format!("moment order {p} must exceed 2")));
    }
    Ok(FieldModel {
        dim,
        law: InnovationLaw::StandardNormal,
        kind: FieldKind::OneCoordinate {
            family: CoordinateFamily::ThresholdIndicator {
                decay: 0.5,
                first_tail: default_first_tail(),
                tail_ratio: default_tail_ratio(),
            },
            radius: 30,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum CoordFn {
    Indicator { scale: f64, threshold: f64, tail: f64, norm: f64 },
    Affine { scale: f64 },
    Square { scale: f64, mean: f64 },
}

impl CoordFn {
    #[inline]
    pub(crate) fn eval(&self, e: f64) -> f64 {
        match *self {
            CoordFn::Indicator { scale, threshold, tail, norm } => {
                let ind = if e.abs() > threshold { 1.0 } else { 0.0 };
                scale * (ind - tail) / norm
            }
            CoordFn::Affine { scale } => scale * e,
            CoordFn::Square { scale, mean } => scale * (e * e - mean),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Repr {
    Linear { support: Vec<(LatticePoint, f64)>, tail_l2: f64, total_l2: f64 },
    OneCoordinate { terms: Vec<(LatticePoint, CoordFn)> },
    FiniteWindow { kind: WindowRepr },
}

#[derive(Clone, Debug)]
pub(crate) enum WindowRepr {
    CenteredSquare { mean: f64 },
    Quadratic { coeffs: Vec<(LatticePoint, f64)>, offset: f64 },
    Product { offset: LatticePoint },
}

/// A validated, ready-to-sample field.
#[derive(Clone, Debug)]
pub struct Field {
    model: FieldModel,
    radius: u64,
    pub(crate) repr: Repr,
}

impl Field {
    pub fn new(model: FieldModel) -> Result<Self> {
        let dim = model.dim;
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        model.law.validate()?;
        let (radius, repr) = match &model.kind {
            FieldKind::Linear { coefficients, truncation, tail_budget } => {
                coefficients.validate(dim)?;
                let budget = tail_budget.unwrap_or(DEFAULT_TAIL_BUDGET);
                let total_l2 = coefficients.total_sq(dim).sqrt();
                let radius = match truncation {
                    Some(r) => *r,
                    None => coefficients.default_radius(dim, budget),
                };
                let tail_l2 = coefficients.tail_sq(radius, dim).max(0.0).sqrt();
                if tail_l2 > budget * total_l2 {
                    return Err(Error::TruncationTail { radius, tail: tail_l2, budget: budget * total_l2 });
                }
                let support = coefficients.support(radius, dim);
                (radius, Repr::Linear { support, tail_l2, total_l2 })
            }
            FieldKind::OneCoordinate { family, radius } => {
                let terms = coordinate_terms(family, &model.law, *radius, dim)?;
                (*radius, Repr::OneCoordinate { terms })
            }
            FieldKind::FiniteWindow { function } => window_repr(function, &model.law, dim)?,
        };
        Ok(Self { model, radius, repr })
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn law(&self) -> &InnovationLaw {
        &self.model.law
    }

    /// `X_0` depends only on `eps_u` with `|u|_inf <= radius`.
    pub fn radius(&self) -> u64 {
        self.radius
    }

    /// `l2` norm of the dropped coefficient tail (linear fields only).
    pub fn truncation_tail(&self) -> Option<f64> {
        match &self.repr {
            Repr::Linear { tail_l2, .. } => Some(*tail_l2),
            _ => None,
        }
    }

    /// `l2` norm of the full (untruncated) coefficient family.
    pub fn coefficient_l2(&self) -> Option<f64> {
        match &self.repr {
            Repr::Linear { total_l2, .. } => Some(*total_l2),
            _ => None,
        }
    }

    pub fn linear_support(&self) -> Option<&[(LatticePoint, f64)]> {
        match &self.repr {
            Repr::Linear { support, .. } => Some(support),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.repr, Repr::Linear { .. })
    }

    /// The linear field cut at radius `m` (no tail budget check).
    pub fn truncated(&self, m: u64) -> Result<Field> {
        match &self.model.kind {
            FieldKind::Linear { coefficients, .. } => {
                let r = m.min(self.radius);
                Field::new(FieldModel {
                    dim: self.model.dim,
                    law: self.model.law,
                    kind: FieldKind::Linear {
                        coefficients: coefficients.clone(),
                        truncation: Some(r),
                        tail_budget: Some(f64::INFINITY),
                    },
                })
            }
            _ => Err(Error::InvalidParameter("truncation applies to linear fields".into())),
        }
    }

    /// `X_i` evaluated on the innovations of `src`.
    pub fn value_at<S: InnovationSource>(&self, i: &LatticePoint, src: &S) -> f64 {
        match &self.repr {
            Repr::Linear { support, .. } => support.iter().map(|(k, a)| a * src.eps(&i.sub(k))).sum(),
            Repr::OneCoordinate { terms } => terms.iter().map(|(k, f)| f.eval(src.eps(&i.sub(k)))).sum(),
            Repr::FiniteWindow { kind } => match kind {
                WindowRepr::CenteredSquare { mean } => {
                    let e = src.eps(i);
                    e * e - mean
                }
                WindowRepr::Quadratic { coeffs, offset } => {
                    let a: f64 = coeffs.iter().map(|(u, c)| c * src.eps(&i.sub(u))).sum();
                    a * a - offset
                }
                WindowRepr::Product { offset } => src.eps(i) * src.eps(&i.sub(offset)),
            },
        }
    }

    /// `E[X_i | eps_u, |u - i|_inf <= m]` when it has a closed form on the
    /// given innovations.
    pub fn conditional_value<S: InnovationSource>(&self, i: &LatticePoint, m: u64, src: &S) -> Option<f64> {
        match &self.repr {
            Repr::Linear { support, .. } => Some(
                support
                    .iter()
                    .filter(|(k, _)| k.sup_norm() <= m)
                    .map(|(k, a)| a * src.eps(&i.sub(k)))
                    .sum(),
            ),
            // each f_k(eps) is centered
            Repr::OneCoordinate { terms } => Some(
                terms
                    .iter()
                    .filter(|(k, _)| k.sup_norm() <= m)
                    .map(|(k, f)| f.eval(src.eps(&i.sub(k))))
                    .sum(),
            ),
            Repr::FiniteWindow { .. } => (self.radius <= m).then(|| self.value_at(i, src)),
        }
    }

    /// Approximates `E[X_i | eps_u, |u - i|_inf <= m]` by averaging
    /// `inner_reps` redraws of the exterior innovations. Returns the mean and
    /// its standard error. Inner draw `k` uses substream
    /// `SUBSTREAM_EXTERIOR + salt + k`.
    pub fn resampled_conditional<S: InnovationSource>(
        &self,
        i: &LatticePoint,
        m: u64,
        src: &S,
        stream: InnovationStream,
        inner_reps: usize,
        salt: u64,
    ) -> Result<(f64, f64)> {
        if inner_reps < 1 {
            return Err(Error::InvalidParameter("inner_reps must be at least 1".into()));
        }
        let mut vals = Vec::with_capacity(inner_reps);
        for k in 0..inner_reps {
            let fresh = StreamSource {
                stream,
                law: self.model.law,
                substream: SUBSTREAM_EXTERIOR + salt + k as u64,
            };
            let ext = ExteriorResampled { base: src, fresh, center: i, radius: m };
            vals.push(self.value_at(i, &ext));
        }
        let (mean, se) = crate::numeric::mean_se(&vals);
        Ok((mean, if inner_reps < 2 { f64::NAN } else { se }))
    }

    /// Conditional expectation on the radius-`m` window: closed form when
    /// available, otherwise exterior resampling. The second value is the
    /// inner standard error (zero when exact).
    pub fn conditional_or_resampled<S: InnovationSource>(
        &self,
        i: &LatticePoint,
        m: u64,
        src: &S,
        stream: InnovationStream,
        inner_reps: usize,
        salt: u64,
    ) -> Result<(f64, f64)> {
        match self.conditional_value(i, m, src) {
            Some(v) => Ok((v, 0.0)),
            None => self.resampled_conditional(i, m, src, stream, inner_reps, salt),
        }
    }

    /// `|X_0|_q` when it is available in closed form.
    pub fn marginal_norm_exact(&self, q: f64) -> Option<f64> {
        let law = &self.model.law;
        match &self.repr {
            Repr::Linear { support, .. } => {
                let l2: f64 = support.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
                if support.len() == 1 {
                    return Some(support[0].1.abs() * law.moment_norm(q));
                }
                match law {
                    InnovationLaw::StandardNormal => Some(l2 * law.moment_norm(q)),
                    _ if q == 2.0 => Some(l2 * law.variance().sqrt()),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

fn coordinate_terms(
    family: &CoordinateFamily,
    law: &InnovationLaw,
    radius: u64,
    dim: usize,
) -> Result<Vec<(LatticePoint, CoordFn)>> {
    match family {
        CoordinateFamily::ThresholdIndicator { decay, first_tail, tail_ratio } => {
            if *law != InnovationLaw::StandardNormal {
                return Err(Error::InvalidParameter(
                    "threshold-indicator family is defined for standard normal innovations".into(),
                ));
            }
            if !(*decay > 0.0 && *decay < 1.0) || !(*first_tail > 0.0 && *first_tail <= 0.5) {
                return Err(Error::InvalidParameter("invalid threshold-indicator parameters".into()));
            }
            if !(*tail_ratio > 0.0 && *tail_ratio < 1.0) {
                return Err(Error::InvalidParameter("tail ratio must lie in (0, 1)".into()));
            }
            let shell_fns: Vec<CoordFn> = (0..=radius)
                .map(|j| {
                    let (threshold, tail) = indicator_threshold(*first_tail, *tail_ratio, j);
                    CoordFn::Indicator {
                        scale: decay.powi(j as i32),
                        threshold,
                        tail,
                        norm: (tail * (1.0 - tail)).sqrt(),
                    }
                })
                .collect();
            Ok(ball_points(radius, dim)
                .into_iter()
                .map(|k| {
                    let f = shell_fns[k.sup_norm() as usize];
                    (k, f)
                })
                .collect())
        }
        CoordinateFamily::Scaled { coefficients, map } => {
            coefficients.validate(dim)?;
            Ok(coefficients
                .support(radius, dim)
                .into_iter()
                .map(|(k, a)| {
                    let f = match map {
                        ScalarMap::Identity => CoordFn::Affine { scale: a },
                        ScalarMap::CenteredSquare => CoordFn::Square { scale: a, mean: law.variance() },
                    };
                    (k, f)
                })
                .collect())
        }
    }
}

/// Threshold `t_j` with `P(|N| > t_j) = P_j`, and `P_j` recomputed from `t_j`.
pub(crate) fn indicator_threshold(first_tail: f64, tail_ratio: f64, shell: u64) -> (f64, f64) {
    let target = first_tail * tail_ratio.powi(shell as i32);
    let t = -phi_inv(0.5 * target);
    (t, normal_two_sided_tail(t))
}

fn window_repr(function: &WindowFunction, law: &InnovationLaw, dim: usize) -> Result<(u64, Repr)> {
    let to_point = |c: &[i64]| -> Result<LatticePoint> {
        if c.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
        }
        LatticePoint::new(c)
    };
    Ok(match function {
        WindowFunction::CenteredSquare => {
            (0, Repr::FiniteWindow { kind: WindowRepr::CenteredSquare { mean: law.variance() } })
        }
        WindowFunction::Quadratic { coefficients } => {
            if coefficients.is_empty() {
                return Err(Error::InvalidParameter("quadratic window needs coefficients".into()));
            }
            let coeffs: Vec<(LatticePoint, f64)> = coefficients
                .iter()
                .map(|e| Ok((to_point(&e.at)?, e.value)))
                .collect::<Result<_>>()?;
            let w = coeffs.iter().map(|(u, _)| u.sup_norm()).max().unwrap_or(0);
            let offset = law.variance() * coeffs.iter().map(|(_, c)| c * c).sum::<f64>();
            (w, Repr::FiniteWindow { kind: WindowRepr::Quadratic { coeffs, offset } })
        }
        WindowFunction::Product { offset } => {
            let off = to_point(offset)?;
            if off.sup_norm() == 0 {
                return Err(Error::InvalidParameter("product offset must be nonzero".into()));
            }
            (off.sup_norm(), Repr::FiniteWindow { kind: WindowRepr::Product { offset: off } })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::shell_points;

    #[test]
    fn geometric_shell_sums_match_enumeration() {
        let fam = CoefficientFamily::Geometric { rate: 0.5, scale: 1.3 };
        for dim in 1..=3 {
            for j in 0..6 {
                let brute: f64 = shell_points(j, dim)
                    .unwrap()
                    .iter()
                    .map(|k| fam.coefficient(k).powi(2))
                    .sum();
                let v = fam.shell_sq_sum(j, dim);
                assert!((v - brute).abs() < 1e-13 * brute.max(1e-300), "d={dim} j={j}");
            }
            let partial: f64 = (0..60).map(|j| fam.shell_sq_sum(j, dim)).sum();
            assert!((partial - fam.total_sq(dim)).abs() < 1e-12);
            let tail5: f64 = (6..80).map(|j| fam.shell_sq_sum(j, dim)).sum();
            assert!((fam.tail_sq(5, dim) - tail5).abs() < 1e-15 + 1e-10 * tail5);
        }
    }

    #[test]
    fn default_radius_meets_budget() {
        let fam = CoefficientFamily::Geometric { rate: 0.5, scale: 1.0 };
        let r = fam.default_radius(2, 1e-8);
        let total = fam.total_sq(2).sqrt();
        assert!(fam.tail_sq(r, 2).sqrt() <= 1e-8 * total);
        assert!(fam.tail_sq(r - 1, 2).sqrt() > 1e-8 * total);
        let diag = CoefficientFamily::Diagonal { exponent: 3.0 };
        let r = diag.default_radius(2, 1e-8);
        assert!(diag.tail_sq(r, 2).sqrt() <= 1e-8 * diag.total_sq(2).sqrt());
        assert!(r > 1000 && r < 1300, "{r}");
    }

    #[test]
    fn truncation_budget_violation_reports_tail() {
        let model = FieldModel {
            dim: 1,
            law: InnovationLaw::StandardNormal,
            kind: FieldKind::Linear {
                coefficients: CoefficientFamily::Geometric { rate: 0.5, scale: 1.0 },
                truncation: Some(3),
                tail_budget: None,
            },
        };
        match model.prepare() {
            Err(Error::TruncationTail { radius: 3, tail, .. }) => assert!(tail > 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_and_window_validation() {
        let bad = FieldModel::linear(
            2,
            InnovationLaw::StandardNormal,
            CoefficientFamily::Explicit { entries: vec![CoefficientEntry { at: vec![0], value: 1.0 }] },
        );
        assert!(bad.prepare().is_err());
        let prod = FieldModel {
            dim: 1,
            law: InnovationLaw::StandardNormal,
            kind: FieldKind::FiniteWindow { function: WindowFunction::Product { offset: vec![0] } },
        };
        assert!(prod.prepare().is_err());
        assert!(example_ratio_field(2.0, 1).is_err());
    }

    #[test]
    fn indicator_thresholds_hit_target_tails() {
        for j in 0..12 {
            let (t, tail) = indicator_threshold(0.5, 0.25, j);
            let target = 0.5 * 0.25f64.powi(j as i32);
            assert!(t >= 0.0);
            assert!((tail - target).abs() < 1e-9 * target, "j={j} {tail} {target}");
        }
    }
}
