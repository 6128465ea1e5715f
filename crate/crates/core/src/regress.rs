//! Fixed-design kernel regression on `{1..n}^d` with random-field noise.

use serde::{Deserialize, Serialize};

use crate::bounds::{berry_esseen_terms, epsilon_n, abs_epsilon_n, moment_bound_main, BerryEsseenInputs, BoundParams, BoundReport, CovarianceTable};
use crate::dependence::DependenceProfile;
use crate::error::{Error, Result};
use crate::fields::{Field, InnovationStream, WeightedSum};
use crate::lattice::{for_each_box, LatticePoint, WeightFamily};
use crate::numeric::replicate;

/// Kernel shapes on `[-1,1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum KernelShape {
    /// `a + b prod_q (1 - |u_q|)`.
    PedestalTent { a: f64, b: f64 },
    /// Constant `height`.
    Flat { height: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub shape: KernelShape,
}

/// Lower and upper bounds, Lipschitz constant for the sup-norm, and `|K|_{L^2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub lower: f64,
    pub upper: f64,
    pub lipschitz: f64,
    pub l2_norm: f64,
}

const QUAD_TOL: f64 = 1e-8;

impl KernelSpec {
    /// Tent on a pedestal with `a : b = 1 : 3`, scaled to unit mass.
    pub fn pedestal_tent(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let t = 1.0 / (0.25 * 2f64.powi(dim as i32) + 0.75);
        let k = Self { dim, shape: KernelShape::PedestalTent { a: 0.25 * t, b: 0.75 * t } };
        k.validate()?;
        Ok(k)
    }

    pub fn flat(dim: usize, height: f64) -> Result<Self> {
        let k = Self { dim, shape: KernelShape::Flat { height } };
        k.validate()?;
        Ok(k)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| v.abs() > 1.0) {
            return 0.0;
        }
        match self.shape {
            KernelShape::PedestalTent { a, b } => a + b * u.iter().map(|v| 1.0 - v.abs()).product::<f64>(),
            KernelShape::Flat { height } => height,
        }
    }

    pub fn constants(&self) -> KernelConstants {
        let d = self.dim as i32;
        match self.shape {
            KernelShape::PedestalTent { a, b } => KernelConstants {
                lower: a,
                upper: a + b,
                // |prod u - prod v| <= sum |u_q - v_q| for factors in [0,1]
                lipschitz: b * self.dim as f64,
                l2_norm: (a * a * 2f64.powi(d) + 2.0 * a * b + b * b * (2.0f64 / 3.0).powi(d)).sqrt(),
            },
            KernelShape::Flat { height } => KernelConstants {
                lower: height,
                upper: height,
                lipschitz: 0.0,
                l2_norm: height * 2f64.powi(d).sqrt(),
            },
        }
    }

    /// Tensor composite Simpson rule on `[-1,1]^d` with nodes at the kinks.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let m = if self.dim <= 3 { 16 } else { 4 };
        let nodes: Vec<(f64, f64)> = (0..=m)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / m as f64;
                let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                (x, w * 2.0 / (3.0 * m as f64))
            })
            .collect();
        let lo = vec![0i64; self.dim];
        let hi = vec![m as i64; self.dim];
        let mut total = 0.0;
        let mut u = vec![0.0; self.dim];
        for_each_box(&lo, &hi, |idx| {
            let mut w = 1.0;
            for (q, &k) in idx.iter().enumerate() {
                let (x, wk) = nodes[k as usize];
                u[q] = x;
                w *= wk;
            }
            total += w * f(self.eval(&u));
        });
        total
    }

    /// Unit mass, symmetry, bounds and Lipschitz constant, checked numerically.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let c = self.constants();
        if !(c.lower > 0.0 && c.upper.is_finite()) {
            return Err(Error::InvalidKernel(format!("kernel must be bounded below by a positive constant, got {}", c.lower)));
        }
        let mass = self.integrate(|k| k);
        if (mass - 1.0).abs() > QUAD_TOL {
            return Err(Error::InvalidKernel(format!("kernel integrates to {mass}, not 1")));
        }
        let l2 = self.integrate(|k| k * k).sqrt();
        if (l2 - c.l2_norm).abs() > 1e-6 * c.l2_norm {
            return Err(Error::InvalidKernel(format!("L2 norm {l2} disagrees with {}", c.l2_norm)));
        }
        let m = 8i64;
        let lo = vec![-m; self.dim];
        let hi = vec![m; self.dim];
        let mut bad = None;
        let grid: Vec<Vec<f64>> = {
            let mut g = Vec::new();
            for_each_box(&lo, &hi, |idx| g.push(idx.iter().map(|&k| k as f64 / m as f64).collect()));
            g
        };
        for (n, u) in grid.iter().enumerate() {
            let k = self.eval(u);
            let neg: Vec<f64> = u.iter().map(|v| -v).collect();
            if (k - self.eval(&neg)).abs() > 1e-14 {
                bad = Some(format!("not symmetric at {u:?}"));
            } else if k < c.lower - 1e-14 || k > c.upper + 1e-14 {
                bad = Some(format!("value {k} outside [{}, {}]", c.lower, c.upper));
            } else if let Some(v) = grid.get(n + 1) {
                let dist = u.iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                if (k - self.eval(v)).abs() > c.lipschitz * dist + 1e-12 {
                    bad = Some(format!("Lipschitz bound violated between {u:?} and {v:?}"));
                }
            }
            if bad.is_some() {
                break;
            }
        }
        match bad {
            Some(msg) => Err(Error::InvalidKernel(msg)),
            None => Ok(()),
        }
    }
}

/// Regression functions for synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum RegressionFunction {
    /// `sin(2 pi sum_q x_q)`.
    Sine,
    Constant { value: f64 },
    Linear { intercept: f64, slope: Vec<f64> },
}

impl RegressionFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RegressionFunction::Sine => (2.0 * std::f64::consts::PI * x.iter().sum::<f64>()).sin(),
            RegressionFunction::Constant { value } => *value,
            RegressionFunction::Linear { intercept, slope } => {
                intercept + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
            }
        }
    }
}

/// `h_n = n^{-(d+2)/(2(d+1))}`: `n h_n -> infinity` and `n h_n^{d+1} -> 0`.
pub fn default_bandwidth(n: usize, dim: usize) -> f64 {
    let d = dim as f64;
    (n as f64).powf(-(d + 2.0) / (2.0 * (d + 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionDesign {
    pub n: usize,
    pub dim: usize,
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub kernel: KernelSpec,
    pub g: RegressionFunction,
}

/// Finite-n view of the two bandwidth limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthDiagnostics {
    /// `n h_n`, should be large.
    pub nh: f64,
    /// `n h_n^{d+1}`, should be small.
    pub nh_pow: f64,
    pub nh_large: bool,
    pub nh_pow_small: bool,
}

impl RegressionDesign {
    pub fn new(n: usize, bandwidth: f64, x: Vec<f64>, kernel: KernelSpec, g: RegressionFunction) -> Result<Self> {
        let d = Self { n, dim: kernel.dim, bandwidth, x, kernel, g };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("grid side must be positive".into()));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth {} must be positive", self.bandwidth)));
        }
        if self.x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.x.len() });
        }
        if self.x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!("target point {:?} outside [0,1]^d", self.x)));
        }
        if let RegressionFunction::Linear { slope, .. } = &self.g {
            if slope.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: slope.len() });
            }
        }
        self.kernel.validate()
    }

    pub fn bandwidth_diagnostics(&self) -> BandwidthDiagnostics {
        let n = self.n as f64;
        let nh = n * self.bandwidth;
        let nh_pow = n * self.bandwidth.powi(self.dim as i32 + 1);
        BandwidthDiagnostics { nh, nh_pow, nh_large: nh >= 10.0, nh_pow_small: nh_pow <= 1.0 }
    }

    pub fn point(&self, i: &LatticePoint) -> Vec<f64> {
        i.coords().iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    fn kernel_at(&self, i: &[i64]) -> f64 {
        let u: Vec<f64> = i
            .iter()
            .zip(&self.x)
            .map(|(&c, x)| (x - c as f64 / self.n as f64) / self.bandwidth)
            .collect();
        self.kernel.eval(&u)
    }
}

/// `b_i = K((x - i/n)/h)` on the grid points where it is nonzero.
pub fn kernel_weights(design: &RegressionDesign) -> Result<WeightFamily> {
    let n = design.n as f64;
    let mut lo = Vec::with_capacity(design.dim);
    let mut hi = Vec::with_capacity(design.dim);
    for x in &design.x {
        lo.push(((n * (x - design.bandwidth)).ceil() as i64 - 1).max(1));
        hi.push(((n * (x + design.bandwidth)).floor() as i64 + 1).min(design.n as i64));
    }
    let mut entries = Vec::new();
    let mut failed = None;
    for_each_box(&lo, &hi, |i| {
        let k = design.kernel_at(i);
        if k > 0.0 {
            match LatticePoint::new(i) {
                Ok(p) => entries.push((p, k)),
                Err(e) => failed = Some(e),
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    if entries.is_empty() {
        return Err(Error::EmptyKernelSupport { n: design.n, bandwidth: design.bandwidth });
    }
    WeightFamily::new(design.dim, entries)
}

/// `sum_i b_i g(i/n) / sum_i b_i`, the mean of the estimator.
pub fn expected_gn(design: &RegressionDesign, w: &WeightFamily) -> f64 {
    let total: f64 = w.iter().map(|(_, b)| b).sum();
    w.iter().map(|(i, b)| b * design.g.eval(&design.point(i))).sum::<f64>() / total
}

/// `g_n(x)` with `Y_i = g(i/n) + X_i`.
pub fn estimate_gn(design: &RegressionDesign, w: &WeightFamily, noise: impl Fn(&LatticePoint) -> f64) -> f64 {
    let total: f64 = w.iter().map(|(_, b)| b).sum();
    let y = |i: &LatticePoint| design.g.eval(&design.point(i)) + noise(i);
    // shifted by the first response, so constant responses come back exactly
    let Some((first, _)) = w.iter().next() else { return f64::NAN };
    let shift = y(first);
    shift + w.iter().map(|(i, b)| b * (y(i) - shift)).sum::<f64>() / total
}

/// `(n h)^{d/2} (sum K^2)^{1/2} / (|K|_2 sum K)`.
pub fn regression_an(design: &RegressionDesign, w: &WeightFamily) -> f64 {
    let nh = design.n as f64 * design.bandwidth;
    let sum: f64 = w.iter().map(|(_, b)| b).sum();
    nh.powf(design.dim as f64 / 2.0) * w.norm_lq(2.0) / (design.kernel.constants().l2_norm * sum)
}

/// Signed regression `epsilon_n` on the kernel weights.
pub fn regression_epsilon_n(w: &WeightFamily, cov: &CovarianceTable) -> Result<f64> {
    epsilon_n(w, cov)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct N1Report {
    /// `sum K / ((n h)^d int K)`.
    pub sum_ratio: f64,
    /// `sum K^2 / ((n h)^d |K|_2^2)`.
    pub square_ratio: f64,
    pub holds: bool,
}

/// Riemann-sum sandwich: both ratios in `[1/2, 3/2]`.
pub fn n1_condition(design: &RegressionDesign) -> N1Report {
    let scale = (design.n as f64 * design.bandwidth).powi(design.dim as i32);
    let (s1, s2) = match kernel_weights(design) {
        Ok(w) => (w.iter().map(|(_, b)| b).sum::<f64>(), w.norm_lq(2.0).powi(2)),
        Err(_) => (0.0, 0.0),
    };
    let l2sq = design.kernel.constants().l2_norm.powi(2);
    let sum_ratio = s1 / scale;
    let square_ratio = s2 / (scale * l2sq);
    let inside = |r: f64| (0.5..=1.5).contains(&r);
    // a bandwidth below half a mesh cell leaves at most one grid point: no Riemann sum
    let resolved = 2.0 * design.n as f64 * design.bandwidth >= 1.0;
    N1Report { sum_ratio, square_ratio, holds: resolved && inside(sum_ratio) && inside(square_ratio) }
}

/// `(n h)^{d/2} (g_n - E g_n)` replicated over independent noise draws.
pub fn standardized_statistic_samples(field: &Field, design: &RegressionDesign, reps: u64, seed: u64) -> Result<Vec<f64>> {
    let w = kernel_weights(design)?;
    let ws = WeightedSum::new(field, &w)?;
    let total: f64 = w.iter().map(|(_, b)| b).sum();
    let scale = (design.n as f64 * design.bandwidth).powf(design.dim as f64 / 2.0) / total;
    Ok(replicate(reps, |r| scale * ws.sample(InnovationStream::new(seed, r))))
}

/// Rate exponents of `n h` in the regression bound.
pub fn regression_exponents(params: &BoundParams, dim: usize) -> [f64; 3] {
    let BoundParams { p, gamma, alpha, beta } = *params;
    let pp = params.p_prime();
    let d = dim as f64;
    [
        d / 2.0 * (gamma * (pp - 1.0) * d - pp + 2.0),
        -d / 2.0 * gamma * alpha * p / (p + 1.0),
        (2.0 * d - p * (gamma * beta + 1.0)) / (2.0 * (p + 1.0)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub bandwidth: f64,
    pub a_n: f64,
    pub eps_n: f64,
    pub abs_eps_n: f64,
    pub n1: N1Report,
    pub bandwidth_diagnostics: BandwidthDiagnostics,
    /// `(sigma^{-1} C_2 + C_p)^{p/(p+1)} |A_n - 1|^{p/(p+1)}`, without the unspecified constant.
    pub an_term: f64,
    pub exponents: [f64; 3],
    /// `(n h)^e` for each exponent.
    pub rate_terms: [f64; 3],
    /// Weighted-sum bound on the kernel weights.
    pub weighted: BoundReport,
    /// `(|A_n - 1| |S|_p / (sigma |b|_2))^{p/(p+1)}` with the moment bound for `|S|_p`.
    pub perturbation: f64,
    /// `2 * weighted.total + perturbation`.
    pub certified: f64,
}

/// All pieces of the regression bound, without refusing on failed conditions.
pub fn regression_terms(
    design: &RegressionDesign,
    profile: &DependenceProfile,
    cov: &CovarianceTable,
    params: &BoundParams,
    x0_norm: f64,
) -> Result<RegressionReport> {
    let w = kernel_weights(design)?;
    let a_n = regression_an(design, &w);
    let inputs = BerryEsseenInputs::assemble(format!("regression-n{}", design.n), profile, cov, &w, params, x0_norm)?;
    let weighted = berry_esseen_terms(&inputs, params)?;
    let p = params.p;
    let e = p / (p + 1.0);
    let sigma = weighted.sigma;
    let an_term = ((weighted.c2 / sigma + weighted.cp) * (a_n - 1.0).abs()).powf(e);
    let moment = moment_bound_main(profile, &w, p)?;
    let perturbation = ((a_n - 1.0).abs() * moment / (sigma * w.norm_lq(2.0))).powf(e);
    let exponents = regression_exponents(params, design.dim);
    let nh = design.n as f64 * design.bandwidth;
    Ok(RegressionReport {
        n: design.n,
        bandwidth: design.bandwidth,
        a_n,
        eps_n: inputs.eps_n,
        abs_eps_n: abs_epsilon_n(&w, cov)?,
        n1: n1_condition(design),
        bandwidth_diagnostics: design.bandwidth_diagnostics(),
        an_term,
        exponents,
        rate_terms: exponents.map(|x| nh.powf(x)),
        certified: 2.0 * weighted.total + perturbation,
        weighted,
        perturbation,
    })
}

/// Certified regression bound; refuses when the `n0` or `n1` condition fails.
pub fn regression_bound(
    design: &RegressionDesign,
    profile: &DependenceProfile,
    cov: &CovarianceTable,
    params: &BoundParams,
    x0_norm: f64,
) -> Result<RegressionReport> {
    let r = regression_terms(design, profile, cov, params, x0_norm)?;
    if !r.n1.holds {
        return Err(Error::ConditionFailed(format!(
            "n1 condition fails at n = {}: sum ratio {}, square ratio {}",
            r.n, r.n1.sum_ratio, r.n1.square_ratio
        )));
    }
    if !r.weighted.n0_condition {
        return Err(Error::ConditionFailed(format!(
            "n0 condition fails at n = {}: lhs {} <= sigma/2 = {}",
            r.n,
            r.weighted.n0_lhs,
            r.weighted.sigma / 2.0
        )));
    }
    Ok(r)
}
