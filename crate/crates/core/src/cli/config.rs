use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundParams;
use crate::error::{Error, Result};
use crate::fields::{CoefficientEntry, FieldKind, FieldModel};
use crate::lattice::{cube_weights, LatticePoint, WeightFamily};
use crate::regress::{default_bandwidth, KernelSpec, RegressionDesign, RegressionFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Physical dependence profile and the increment-norm lemma.
    Delta,
    Moments,
    BerryEsseen,
    SetIndexed,
    Regression,
    ConditionsD2,
    ExampleRatio,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Delta => "delta",
            Experiment::Moments => "moments",
            Experiment::BerryEsseen => "berry_esseen",
            Experiment::SetIndexed => "set_indexed",
            Experiment::Regression => "regression",
            Experiment::ConditionsD2 => "conditions_d2",
            Experiment::ExampleRatio => "example_ratio",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// Indicator of `{1..n}^d` for each listed `n`.
    Cube { sizes: Vec<usize> },
    Explicit { entries: Vec<CoefficientEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthSpec {
    /// `n^{-(d+2)/(2(d+1))}`.
    Default,
    /// `n^exponent`.
    Power { exponent: f64 },
    Fixed { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub sizes: Vec<usize>,
    pub bandwidth: BandwidthSpec,
    pub x: Vec<f64>,
    #[serde(default = "default_g")]
    pub g: RegressionFunction,
}

fn default_g() -> RegressionFunction {
    RegressionFunction::Sine
}

impl RegressionSpec {
    pub fn bandwidth_at(&self, n: usize, dim: usize) -> f64 {
        match self.bandwidth {
            BandwidthSpec::Default => default_bandwidth(n, dim),
            BandwidthSpec::Power { exponent } => (n as f64).powf(exponent),
            BandwidthSpec::Fixed { value } => value,
        }
    }

    pub fn design(&self, n: usize, dim: usize) -> Result<RegressionDesign> {
        RegressionDesign::new(n, self.bandwidth_at(n, dim), self.x.clone(), KernelSpec::pedestal_tent(dim)?, self.g.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Replications {
    #[serde(default = "default_cdf")]
    pub cdf: u64,
    #[serde(default = "default_moments")]
    pub moments: u64,
    #[serde(default = "default_inner")]
    pub inner: usize,
}

fn default_cdf() -> u64 {
    crate::montecarlo::DEFAULT_CDF_REPS
}
fn default_moments() -> u64 {
    crate::montecarlo::DEFAULT_MOMENT_REPS
}
fn default_inner() -> usize {
    64
}

impl Default for Replications {
    fn default() -> Self {
        Self { cdf: default_cdf(), moments: default_moments(), inner: default_inner() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: FieldModel,
    pub weights: WeightSpec,
    pub params: BoundParams,
    pub experiments: Vec<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replications: Replications,
    #[serde(default)]
    pub regression: Option<RegressionSpec>,
    /// Shells reported by the ratio experiment.
    #[serde(default = "default_ratio_shells")]
    pub ratio_shells: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_ratio_shells() -> u64 {
    10
}

/// Schema or validation problem, with a position when the parser has one.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl ConfigError {
    fn plain(e: impl std::fmt::Display) -> Self {
        Self { line: None, column: None, message: e.to_string() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(ConfigError::plain)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::plain(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every parameter is checked here, before anything is simulated.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(',') {
            return Err(Error::Config("name must be nonempty and free of commas".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("experiment list is empty".into()));
        }
        let mut seen = self.experiments.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.experiments.len() {
            return Err(Error::Config("experiment listed twice".into()));
        }
        self.params.validate()?;
        self.model.prepare()?;
        self.weight_families()?;
        let r = &self.replications;
        if r.cdf < 100 || r.moments < 32 || r.inner == 0 {
            return Err(Error::Config("replication counts too small (cdf >= 100, moments >= 32, inner >= 1)".into()));
        }
        let wants = |e: Experiment| self.experiments.contains(&e);
        if wants(Experiment::Regression) {
            let spec = self
                .regression
                .as_ref()
                .ok_or_else(|| Error::Config("regression experiment needs a regression section".into()))?;
            if spec.sizes.is_empty() {
                return Err(Error::Config("regression sizes are empty".into()));
            }
            for &n in &spec.sizes {
                spec.design(n, self.model.dim)?;
            }
        }
        if wants(Experiment::ConditionsD2) {
            if self.model.dim != 2 {
                return Err(Error::Config("conditions_d2 needs a two-dimensional model".into()));
            }
            if !matches!(self.model.kind, FieldKind::Linear { .. }) {
                return Err(Error::Config("conditions_d2 needs a linear model".into()));
            }
        }
        if wants(Experiment::ExampleRatio) && self.ratio_shells == 0 {
            return Err(Error::Config("ratio_shells must be positive".into()));
        }
        if wants(Experiment::SetIndexed) && !matches!(self.weights, WeightSpec::Cube { .. }) {
            return Err(Error::Config("set_indexed needs cube weights".into()));
        }
        Ok(())
    }

    /// Labelled weight families with their size parameter.
    pub fn weight_families(&self) -> Result<Vec<(usize, WeightFamily)>> {
        match &self.weights {
            WeightSpec::Cube { sizes } => {
                if sizes.is_empty() {
                    return Err(Error::Config("cube sizes are empty".into()));
                }
                sizes.iter().map(|&n| Ok((n, cube_weights(n, self.model.dim)?))).collect()
            }
            WeightSpec::Explicit { entries } => {
                let w = WeightFamily::new(
                    self.model.dim,
                    entries
                        .iter()
                        .map(|e| Ok((LatticePoint::new(&e.at)?, e.value)))
                        .collect::<Result<Vec<_>>>()?,
                )?;
                Ok(vec![(w.len(), w)])
            }
        }
    }
}
