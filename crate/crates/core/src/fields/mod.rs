//! Bernoulli random fields `X_i = f((eps_{i-j})_j)` and their sampling.

pub mod law;
pub mod model;
pub mod stream;

use std::collections::BTreeMap;

pub use law::InnovationLaw;
pub use model::{
    example_ratio_field, CoefficientEntry, CoefficientFamily, CoordinateFamily, Decay, Field, FieldKind,
    FieldModel, ScalarMap, WindowFunction,
};
pub use stream::{InnovationSource, InnovationStream};

use crate::error::{Error, Result};
use crate::lattice::{for_each_box, IndexSet, LatticePoint, WeightFamily};
use stream::{CoupledSource, DenseInnovations, StreamSource, SUBSTREAM_COUPLING};

/// Above this many sites the innovations are not cached densely.
const DENSE_LIMIT: usize = 1 << 24;

fn check_dim(field: &Field, dim: usize) -> Result<()> {
    if field.dim() != dim {
        return Err(Error::DimensionMismatch { expected: field.dim(), found: dim });
    }
    Ok(())
}

fn dilated_box(lo: &[i64], hi: &[i64], r: u64) -> (Vec<i64>, Vec<i64>) {
    let r = r as i64;
    (lo.iter().map(|x| x - r).collect(), hi.iter().map(|x| x + r).collect())
}

fn box_size(lo: &[i64], hi: &[i64]) -> usize {
    lo.iter().zip(hi).map(|(l, h)| (h - l + 1).max(0) as usize).fold(1usize, |a, b| a.saturating_mul(b))
}

/// Innovation source for one replication, densely cached on the
/// `radius`-neighbourhood of `region` when that is small enough.
fn region_source(
    field: &Field,
    lo: &[i64],
    hi: &[i64],
    stream: InnovationStream,
) -> DenseInnovations<StreamSource> {
    let src = StreamSource::main(stream, *field.law());
    let (l, h) = dilated_box(lo, hi, field.radius());
    if box_size(&l, &h) <= DENSE_LIMIT {
        DenseInnovations::fill(&l, &h, src)
    } else {
        DenseInnovations::fill(&l, &l.iter().map(|x| x - 1).collect::<Vec<_>>(), src)
    }
}

/// One realization of `X` on `region`.
pub fn sample_field(
    field: &Field,
    region: &IndexSet,
    stream: InnovationStream,
) -> Result<BTreeMap<LatticePoint, f64>> {
    check_dim(field, region.dim())?;
    let (lo, hi) = region.bounding_box().ok_or(Error::EmptyIndexSet)?;
    let src = region_source(field, &lo, &hi, stream);
    Ok(region.iter().map(|i| (i.clone(), field.value_at(i, &src))).collect())
}

/// `(X_i, X_i*)` where `X_i*` uses an independent copy of `eps_0`.
pub fn sample_coupled_pair(field: &Field, i: &LatticePoint, stream: InnovationStream) -> Result<(f64, f64)> {
    check_dim(field, i.dim())?;
    let src = StreamSource::main(stream, *field.law());
    let origin = LatticePoint::origin(field.dim());
    let coupled = CoupledSource { base: &src, origin_value: stream.eps(field.law(), SUBSTREAM_COUPLING, &origin) };
    Ok((field.value_at(i, &src), field.value_at(i, &coupled)))
}

/// The `m`-dependent approximation `X^{(m)}_i = E[X_i | eps_u, |u - i|_inf <= m]`
/// on a region.
#[derive(Clone, Debug)]
pub struct MDependentSample {
    pub values: BTreeMap<LatticePoint, f64>,
    /// Largest inner standard error over the region; zero when exact.
    pub max_inner_se: f64,
    pub exact: bool,
}

pub fn m_dependent_field(
    field: &Field,
    m: u64,
    region: &IndexSet,
    stream: InnovationStream,
    inner_reps: usize,
) -> Result<MDependentSample> {
    check_dim(field, region.dim())?;
    let (lo, hi) = region.bounding_box().ok_or(Error::EmptyIndexSet)?;
    let src = region_source(field, &lo, &hi, stream);
    let mut values = BTreeMap::new();
    let mut max_se = 0.0f64;
    let mut exact = true;
    for i in region.iter() {
        let (v, se) = field.conditional_or_resampled(i, m, &src, stream, inner_reps, 0)?;
        if field.conditional_value(i, m, &src).is_none() {
            exact = false;
        }
        max_se = max_se.max(se);
        values.insert(i.clone(), v);
    }
    Ok(MDependentSample { values, max_inner_se: max_se, exact })
}

/// Coefficients `c_u` with `sum_i w_i X_i = sum_u c_u eps_u` for a linear field
/// restricted to coefficients with `|k|_inf > cut` (`None` keeps all).
fn effective_coefficients(
    support: &[(LatticePoint, f64)],
    weights: &WeightFamily,
    cut: Option<u64>,
) -> Vec<(LatticePoint, f64)> {
    let kept: Vec<&(LatticePoint, f64)> =
        support.iter().filter(|(k, _)| cut.is_none_or(|m| k.sup_norm() > m)).collect();
    if kept.is_empty() {
        return Vec::new();
    }
    let dim = weights.dim();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for (i, _) in weights.iter() {
        for (t, c) in i.coords().iter().enumerate() {
            lo[t] = lo[t].min(*c);
            hi[t] = hi[t].max(*c);
        }
    }
    let mut klo = vec![i64::MAX; dim];
    let mut khi = vec![i64::MIN; dim];
    for (k, _) in &kept {
        for (t, c) in k.coords().iter().enumerate() {
            klo[t] = klo[t].min(*c);
            khi[t] = khi[t].max(*c);
        }
    }
    // u = i - k
    let ulo: Vec<i64> = (0..dim).map(|t| lo[t] - khi[t]).collect();
    let uhi: Vec<i64> = (0..dim).map(|t| hi[t] - klo[t]).collect();
    let size = box_size(&ulo, &uhi);
    if size <= DENSE_LIMIT {
        let extent: Vec<usize> = (0..dim).map(|t| (uhi[t] - ulo[t] + 1) as usize).collect();
        let mut acc = vec![0.0f64; size];
        let index = |u: &[i64]| -> usize {
            let mut idx = 0usize;
            for t in 0..dim {
                idx = idx * extent[t] + (u[t] - ulo[t]) as usize;
            }
            idx
        };
        let mut u = vec![0i64; dim];
        for (i, b) in weights.iter() {
            for (k, a) in &kept {
                for t in 0..dim {
                    u[t] = i.coords()[t] - k.coords()[t];
                }
                acc[index(&u)] += b * a;
            }
        }
        let mut out = Vec::new();
        let mut pos = 0usize;
        for_each_box(&ulo, &uhi, |c| {
            if acc[pos] != 0.0 {
                out.push((LatticePoint::new(c).expect("dim > 0"), acc[pos]));
            }
            pos += 1;
        });
        out
    } else {
        let mut acc: BTreeMap<LatticePoint, f64> = BTreeMap::new();
        for (i, b) in weights.iter() {
            for (k, a) in &kept {
                *acc.entry(i.sub(k)).or_insert(0.0) += b * a;
            }
        }
        acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
    }
}

enum SumPlan {
    Effective(Vec<(LatticePoint, f64)>),
    Direct { lo: Vec<i64>, hi: Vec<i64> },
}

/// Sampler for `S = sum_i w_i X_i`.
pub struct WeightedSum<'a> {
    field: &'a Field,
    weights: &'a WeightFamily,
    plan: SumPlan,
}

impl<'a> WeightedSum<'a> {
    pub fn new(field: &'a Field, weights: &'a WeightFamily) -> Result<Self> {
        check_dim(field, weights.dim())?;
        let plan = match field.linear_support() {
            Some(support) => SumPlan::Effective(effective_coefficients(support, weights, None)),
            None => {
                let (lo, hi) = weights_box(weights);
                SumPlan::Direct { lo, hi }
            }
        };
        Ok(Self { field, weights, plan })
    }

    /// `sum_u c_u^2`, so that `Var S = Var(eps) * sum c_u^2` for linear fields.
    pub fn effective_sq_norm(&self) -> Option<f64> {
        match &self.plan {
            SumPlan::Effective(c) => Some(c.iter().map(|(_, v)| v * v).sum()),
            SumPlan::Direct { .. } => None,
        }
    }

    pub fn sample(&self, stream: InnovationStream) -> f64 {
        match &self.plan {
            SumPlan::Effective(c) => {
                let law = *self.field.law();
                c.iter().map(|(u, v)| v * stream.eps(&law, stream::SUBSTREAM_MAIN, u)).sum()
            }
            SumPlan::Direct { lo, hi } => {
                let src = region_source(self.field, lo, hi, stream);
                self.weights.iter().map(|(i, b)| b * self.field.value_at(i, &src)).sum()
            }
        }
    }
}

fn weights_box(weights: &WeightFamily) -> (Vec<i64>, Vec<i64>) {
    let dim = weights.dim();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for (i, _) in weights.iter() {
        for (t, c) in i.coords().iter().enumerate() {
            lo[t] = lo[t].min(*c);
            hi[t] = hi[t].max(*c);
        }
    }
    (lo, hi)
}

/// Sampler for the approximation residual `S - S^{(m)} = sum_i w_i (X_i - X^{(m)}_i)`.
pub struct ResidualSum<'a> {
    field: &'a Field,
    weights: &'a WeightFamily,
    m: u64,
    inner_reps: usize,
    plan: SumPlan,
}

impl<'a> ResidualSum<'a> {
    pub fn new(field: &'a Field, weights: &'a WeightFamily, m: u64, inner_reps: usize) -> Result<Self> {
        check_dim(field, weights.dim())?;
        let plan = match field.linear_support() {
            Some(support) => SumPlan::Effective(effective_coefficients(support, weights, Some(m))),
            None => {
                let (lo, hi) = weights_box(weights);
                SumPlan::Direct { lo, hi }
            }
        };
        Ok(Self { field, weights, m, inner_reps, plan })
    }

    /// Residual draw and the largest inner standard error (zero when exact).
    pub fn sample(&self, stream: InnovationStream) -> Result<(f64, f64)> {
        match &self.plan {
            SumPlan::Effective(c) => {
                let law = *self.field.law();
                Ok((c.iter().map(|(u, v)| v * stream.eps(&law, stream::SUBSTREAM_MAIN, u)).sum(), 0.0))
            }
            SumPlan::Direct { lo, hi } => {
                let src = region_source(self.field, lo, hi, stream);
                let mut acc = 0.0;
                let mut max_se = 0.0f64;
                for (i, b) in self.weights.iter() {
                    let x = self.field.value_at(i, &src);
                    let (xm, se) =
                        self.field.conditional_or_resampled(i, self.m, &src, stream, self.inner_reps, 0)?;
                    acc += b * (x - xm);
                    max_se = max_se.max(b.abs() * se);
                }
                Ok((acc, max_se))
            }
        }
    }
}
