//! Multi-index arithmetic on `Z^d`: points, sup-norm shells, sparse weight
//! families and finite index sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Coords = SmallVec<[i64; 4]>;

/// A point of the integer lattice `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(Coords);

impl LatticePoint {
    pub fn new(coords: &[i64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self(Coords::from_slice(coords)))
    }

    pub fn origin(dim: usize) -> Self {
        Self(SmallVec::from_elem(0, dim.max(1)))
    }

    /// The unit vector along axis `axis` (0-based).
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Self::origin(dim);
        p.0[axis] = 1;
        p
    }

    /// `k` times the unit vector along the first axis.
    pub fn on_first_axis(dim: usize, k: i64) -> Self {
        let mut p = Self::origin(dim);
        p.0[0] = k;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn sup_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Number of lattice points with sup-norm exactly `radius` in dimension `dim`.
pub fn shell_size(radius: u64, dim: usize) -> u64 {
    if radius == 0 {
        return 1;
    }
    let outer = (2 * radius + 1).pow(dim as u32);
    let inner = (2 * radius - 1).pow(dim as u32);
    outer - inner
}

/// Enumerates `{i in Z^d : |i|_inf = radius}` in lexicographic order.
pub fn shell_points(radius: u64, dim: usize) -> Result<Vec<LatticePoint>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let r = radius as i64;
    let mut out = Vec::with_capacity(shell_size(radius, dim) as usize);
    for_each_in_box(dim, -r, r, |c| {
        if c.iter().any(|x| x.abs() == r) {
            out.push(LatticePoint(Coords::from_slice(c)));
        }
    });
    Ok(out)
}

/// All points of the cube `[-radius, radius]^d`, lexicographic.
pub fn ball_points(radius: u64, dim: usize) -> Vec<LatticePoint> {
    let r = radius as i64;
    let mut out = Vec::with_capacity((2 * radius + 1).pow(dim as u32) as usize);
    for_each_in_box(dim, -r, r, |c| out.push(LatticePoint(Coords::from_slice(c))));
    out
}

/// Calls `f` on every integer vector in `[lo, hi]^dim`, last coordinate fastest.
pub(crate) fn for_each_in_box(dim: usize, lo: i64, hi: i64, f: impl FnMut(&[i64])) {
    for_each_box(&vec![lo; dim], &vec![hi; dim], f)
}

/// Calls `f` on every integer vector of the box `prod [lo_q, hi_q]`, last
/// coordinate fastest.
pub(crate) fn for_each_box(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    if lo.iter().zip(hi).any(|(l, h)| h < l) {
        return;
    }
    let dim = lo.len();
    let mut cur = lo.to_vec();
    loop {
        f(&cur);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if cur[axis] < hi[axis] {
                cur[axis] += 1;
                cur[axis + 1..].copy_from_slice(&lo[axis + 1..]);
                break;
            }
        }
    }
}

/// A finitely supported family of real weights on `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    dim: usize,
    entries: BTreeMap<LatticePoint, f64>,
}

impl WeightFamily {
    /// Builds a family from explicit entries. Zero weights are dropped; the
    /// remaining support must be nonempty.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (LatticePoint, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut map = BTreeMap::new();
        for (p, w) in entries {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite weight at {p}")));
            }
            if w != 0.0 {
                *map.entry(p).or_insert(0.0) += w;
            }
        }
        map.retain(|_, w| *w != 0.0);
        if map.is_empty() {
            return Err(Error::EmptyWeights);
        }
        Ok(Self { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, p: &LatticePoint) -> f64 {
        self.entries.get(p).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, f64)> + '_ {
        self.entries.iter().map(|(p, w)| (p, *w))
    }

    /// `(sum |b_i|^q)^(1/q)`.
    pub fn norm_lq(&self, q: f64) -> f64 {
        if q == 2.0 {
            return self.entries.values().map(|w| w * w).sum::<f64>().sqrt();
        }
        self.entries.values().map(|w| w.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.dim, self.entries.iter().map(|(p, w)| (p.clone(), w * c)))
    }

    /// `sum_i self_i * other_{i+j}`, enumerating the smaller support.
    pub fn inner_translated(&self, other: &WeightFamily, lag: &LatticePoint) -> f64 {
        if self.len() <= other.len() {
            self.entries.iter().map(|(i, w)| w * other.get(&i.add(lag))).sum()
        } else {
            // substitute k = i + j
            other.entries.iter().map(|(k, v)| v * self.get(&k.sub(lag))).sum()
        }
    }

    /// `<b, tau_j b> = sum_i b_i b_{i+j}`.
    pub fn translate_inner(&self, lag: &LatticePoint) -> f64 {
        self.inner_translated(self, lag)
    }

    /// Sup-norm of the largest point in the support.
    pub fn support_radius(&self) -> u64 {
        self.entries.keys().map(LatticePoint::sup_norm).max().unwrap_or(0)
    }

    /// All lags `j` for which `b_i b_{i+j}` can be nonzero.
    pub fn difference_set(&self) -> BTreeSet<LatticePoint> {
        let mut out = BTreeSet::new();
        for a in self.entries.keys() {
            for b in self.entries.keys() {
                out.insert(b.sub(a));
            }
        }
        out
    }
}

/// Indicator weights of the cube `{1, ..., n}^d`.
pub fn cube_weights(n: usize, dim: usize) -> Result<WeightFamily> {
    Ok(IndexSet::cube(n, dim)?.to_weights())
}

/// `|tau_{e_q} b - b|_2 / |b|_2` for the axis `axis` in `1..=d`.
pub fn weight_condition_defect(w: &WeightFamily, axis: usize) -> Result<f64> {
    if axis == 0 || axis > w.dim() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} outside 1..={}",
            w.dim()
        )));
    }
    let e = LatticePoint::unit(w.dim(), axis - 1);
    // (tau_e b)_i = b_{i+e}; its support is supp(b) - e.
    let mut touched: BTreeSet<LatticePoint> = w.entries.keys().cloned().collect();
    touched.extend(w.entries.keys().map(|p| p.sub(&e)));
    let diff_sq: f64 = touched
        .iter()
        .map(|i| {
            let d = w.get(&i.add(&e)) - w.get(i);
            d * d
        })
        .sum();
    Ok(diff_sq.sqrt() / w.norm_lq(2.0))
}

/// A finite subset of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    dim: usize,
    points: BTreeSet<LatticePoint>,
}

impl IndexSet {
    pub fn new(dim: usize, points: impl IntoIterator<Item = LatticePoint>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let points: BTreeSet<_> = points.into_iter().collect();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
        Ok(Self { dim, points })
    }

    /// `{1, ..., n}^d`.
    pub fn cube(n: usize, dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cube side must be >= 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut pts = BTreeSet::new();
        for_each_in_box(dim, 1, n as i64, |c| {
            pts.insert(LatticePoint(Coords::from_slice(c)));
        });
        Ok(Self { dim, points: pts })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.points.contains(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticePoint> + '_ {
        self.points.iter()
    }

    /// `|L ∩ (L - j)|`.
    pub fn overlap(&self, lag: &LatticePoint) -> usize {
        self.points.iter().filter(|p| self.points.contains(&p.add(lag))).count()
    }

    /// The 0/1 weight family of this set.
    pub fn to_weights(&self) -> WeightFamily {
        WeightFamily {
            dim: self.dim,
            entries: self.points.iter().map(|p| (p.clone(), 1.0)).collect(),
        }
    }

    /// Points within sup-distance `radius` of the set.
    pub fn dilate(&self, radius: u64) -> IndexSet {
        let ball = ball_points(radius, self.dim);
        let mut out = BTreeSet::new();
        for p in &self.points {
            for b in &ball {
                out.insert(p.add(b));
            }
        }
        IndexSet { dim: self.dim, points: out }
    }

    /// Coordinate-wise bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> Option<(Vec<i64>, Vec<i64>)> {
        let first = self.points.iter().next()?;
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in &self.points {
            for (k, &c) in p.coords().iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn shell_examples() {
        assert_eq!(shell_points(0, 2).unwrap(), vec![pt(&[0, 0])]);
        assert_eq!(shell_points(1, 2).unwrap().len(), 8);
        // [-2,2]^3 minus [-1,1]^3
        let mut brute = 0;
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                for c in -2i64..=2 {
                    if a.abs().max(b.abs()).max(c.abs()) == 2 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 98);
        assert_eq!(shell_points(2, 3).unwrap().len(), 98);
        assert!(matches!(shell_points(1, 0), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn shell_points_are_distinct_and_on_shell() {
        let pts = shell_points(3, 2).unwrap();
        let set: BTreeSet<_> = pts.iter().cloned().collect();
        assert_eq!(set.len(), pts.len());
        assert!(pts.iter().all(|p| p.sup_norm() == 3));
    }

    #[test]
    fn cube_norms() {
        let w = cube_weights(2, 2).unwrap();
        assert_eq!(w.len(), 4);
        assert!((w.norm_lq(2.0) - 2.0).abs() < 1e-15);
        let w = cube_weights(3, 1).unwrap();
        assert!((w.norm_lq(3.0) - 3f64.powf(1.0 / 3.0)).abs() < 1e-14);
        let lam = IndexSet::cube(10, 2).unwrap();
        assert_eq!(lam.overlap(&pt(&[1, 1])), 81);
    }

    #[test]
    fn defect_examples() {
        for n in [1usize, 4, 25, 100] {
            let d = weight_condition_defect(&cube_weights(n, 1).unwrap(), 1).unwrap();
            assert!((d - 2f64.sqrt() / (n as f64).sqrt()).abs() < 1e-14);
        }
        let single = WeightFamily::new(1, [(pt(&[0]), 1.0)]).unwrap();
        assert!((weight_condition_defect(&single, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let sq = cube_weights(100, 2).unwrap();
        let d = weight_condition_defect(&sq, 1).unwrap();
        assert!((d - 200f64.sqrt() / 100.0).abs() < 1e-14);
        assert!(weight_condition_defect(&sq, 3).is_err());
    }

    #[test]
    fn defect_decreases_along_cubes() {
        let mut prev = f64::INFINITY;
        for n in 1..12 {
            let d = weight_condition_defect(&cube_weights(n, 2).unwrap(), 2).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(matches!(
            WeightFamily::new(2, [(pt(&[0, 0]), 0.0)]),
            Err(Error::EmptyWeights)
        ));
    }

    fn arb_weights() -> impl Strategy<Value = WeightFamily> {
        prop::collection::vec(((-4i64..4, -4i64..4), -3.0f64..3.0), 1..20).prop_filter_map(
            "nonzero",
            |v| WeightFamily::new(2, v.into_iter().map(|((a, b), w)| (pt(&[a, b]), w))).ok(),
        )
    }

    proptest! {
        #[test]
        fn shell_cardinality(j in 1u64..6, d in 1usize..4) {
            let n = shell_points(j, d).unwrap().len() as u64;
            prop_assert_eq!(n, (2 * j + 1).pow(d as u32) - (2 * j - 1).pow(d as u32));
        }

        #[test]
        fn translate_inner_symmetric(w in arb_weights(), a in -5i64..5, b in -5i64..5) {
            let j = pt(&[a, b]);
            let lhs = w.translate_inner(&j);
            let rhs = w.translate_inner(&j.neg());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let n2 = w.norm_lq(2.0);
            prop_assert!((w.translate_inner(&LatticePoint::origin(2)) - n2 * n2).abs() < 1e-10);
        }

        #[test]
        fn overlap_matches_indicator_inner(
            pts in prop::collection::btree_set((-4i64..4, -4i64..4), 1..25),
            a in -6i64..6, b in -6i64..6,
        ) {
            let set = IndexSet::new(2, pts.into_iter().map(|(x, y)| pt(&[x, y]))).unwrap();
            let j = pt(&[a, b]);
            let ov = set.overlap(&j);
            prop_assert!(ov <= set.len());
            prop_assert_eq!(set.overlap(&LatticePoint::origin(2)), set.len());
            prop_assert_eq!(set.to_weights().translate_inner(&j), ov as f64);
            let n2 = set.to_weights().norm_lq(2.0);
            prop_assert!((n2 * n2 - set.len() as f64).abs() < 1e-9);
        }
    }
}
