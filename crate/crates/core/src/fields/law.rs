use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{beta_fn, integrate, normal_abs_moment};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Distribution of the i.i.d. innovations. Every law is centered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationLaw {
    StandardNormal,
    Rademacher,
    /// Unit-variance uniform law on `[-sqrt 3, sqrt 3]`.
    UniformCentered,
    /// Pareto law with scale 1 and the given tail index, minus its mean.
    CenteredPareto { tail_index: f64 },
}

impl InnovationLaw {
    pub fn validate(&self) -> Result<()> {
        if let InnovationLaw::CenteredPareto { tail_index } = *self {
            if !(tail_index > 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "Pareto tail index {tail_index} must exceed 2 for a finite variance"
                )));
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InnovationLaw::StandardNormal
            | InnovationLaw::Rademacher
            | InnovationLaw::UniformCentered => 1.0,
            InnovationLaw::CenteredPareto { tail_index: a } => a / ((a - 1.0).powi(2) * (a - 2.0)),
        }
    }

    /// Supremum of moment orders that are finite.
    pub fn tail_index(&self) -> f64 {
        match *self {
            InnovationLaw::CenteredPareto { tail_index } => tail_index,
            _ => f64::INFINITY,
        }
    }

    fn check_order(&self, p: f64) -> Result<()> {
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!("moment order {p} must be positive")));
        }
        if p >= self.tail_index() {
            return Err(Error::InfiniteMoment { order: p, tail_index: self.tail_index() });
        }
        Ok(())
    }

    /// `E|eps|^p`.
    pub fn abs_moment(&self, p: f64) -> Result<f64> {
        self.check_order(p)?;
        Ok(match *self {
            InnovationLaw::StandardNormal => normal_abs_moment(p),
            InnovationLaw::Rademacher => 1.0,
            InnovationLaw::UniformCentered => SQRT3.powf(p) / (p + 1.0),
            InnovationLaw::CenteredPareto { tail_index: a } => {
                let mu = a / (a - 1.0);
                // x = mu / t maps [mu, inf) onto (0, 1] and [1, mu] onto [1, mu]
                let upper = a * mu.powf(p - a) * beta_fn(a - p, p + 1.0);
                let lower = a
                    * mu.powf(p - a)
                    * integrate(|t| (t - 1.0).powf(p) * t.powf(a - p - 1.0), 1.0, mu, 1e-14);
                upper + lower
            }
        })
    }

    /// `|eps|_p = (E|eps|^p)^{1/p}`; infinite when the moment does not exist.
    pub fn moment_norm(&self, p: f64) -> f64 {
        match self.abs_moment(p) {
            Ok(m) => m.powf(1.0 / p),
            Err(_) => f64::INFINITY,
        }
    }

    /// `E|eps - eps'|^p` for an independent copy `eps'`.
    pub fn abs_moment_of_difference(&self, p: f64) -> Result<f64> {
        self.check_order(p)?;
        Ok(match *self {
            // eps - eps' ~ N(0, 2)
            InnovationLaw::StandardNormal => 2f64.powf(0.5 * p) * normal_abs_moment(p),
            // values -2, 0, 2 with probabilities 1/4, 1/2, 1/4
            InnovationLaw::Rademacher => 0.5 * 2f64.powf(p),
            // triangular density on [-L, L], L = 2 sqrt 3
            InnovationLaw::UniformCentered => {
                let l = 2.0 * SQRT3;
                2.0 * l.powf(p) / ((p + 1.0) * (p + 2.0))
            }
            InnovationLaw::CenteredPareto { tail_index: a } => {
                2.0 * a * a * beta_fn(p + 1.0, a - p) / (2.0 * a - p)
            }
        })
    }

    /// `|eps - eps'|_p`.
    pub fn difference_norm(&self, p: f64) -> Result<f64> {
        Ok(self.abs_moment_of_difference(p)?.powf(1.0 / p))
    }

    /// Maps two independent uniform words to one innovation.
    pub(crate) fn sample(&self, w0: u64, w1: u64) -> f64 {
        match *self {
            InnovationLaw::StandardNormal => {
                let u1 = unit_open(w0);
                let u2 = unit_open(w1);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            InnovationLaw::Rademacher => {
                if w0 >> 63 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            InnovationLaw::UniformCentered => SQRT3 * (2.0 * unit_open(w0) - 1.0),
            InnovationLaw::CenteredPareto { tail_index: a } => {
                unit_open(w0).powf(-1.0 / a) - a / (a - 1.0)
            }
        }
    }
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
#[inline]
pub(crate) fn unit_open(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
