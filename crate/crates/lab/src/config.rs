//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! n_grid = [500, 1000, 2000]
//! replicates = 10
//! test_size = 500
//! estimators = ["honest_cart", "oracle_partition"]
//!
//! [model]
//! dimension = 50
//! sparsity = 10
//! component_kind = "linear"   # or "square"
//! coefficient = 1.0
//! noise_variance = 0.01
//! distribution = "uniform"    # or "boolean", which needs bernoulli_p
//!
//! [fit]
//! min_samples_leaf = 5
//! ```
//!
//! Every key outside `[model]` is optional. Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ala_core::models::{AdditiveModel, ComponentKind, CovariateDistribution};
use ala_core::trees::FitParams;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

pub const DEFAULT_N_GRID: [usize; 6] = [500, 1000, 2000, 4000, 8000, 16000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Cart,
    HonestCart,
    Forest,
    OraclePartition,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 4] =
        [EstimatorId::Cart, EstimatorId::HonestCart, EstimatorId::Forest, EstimatorId::OraclePartition];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Cart => "cart",
            EstimatorId::HonestCart => "honest_cart",
            EstimatorId::Forest => "forest",
            EstimatorId::OraclePartition => "oracle_partition",
        }
    }

    /// Stable index mixed into per-record seeds.
    pub fn seed_tag(self) -> u64 {
        match self {
            EstimatorId::Cart => 0,
            EstimatorId::HonestCart => 1,
            EstimatorId::Forest => 2,
            EstimatorId::OraclePartition => 3,
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown estimator {s:?} (expected cart, honest_cart, forest or oracle_partition)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Linear,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dimension: usize,
    pub sparsity: usize,
    pub component_kind: KindSpec,
    pub coefficient: f64,
    pub noise_variance: f64,
    pub distribution: DistributionSpec,
    pub bernoulli_p: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<AdditiveModel, ConfigError> {
        if self.dimension == 0 {
            return Err(invalid("model.dimension", "must be >= 1"));
        }
        if self.sparsity > self.dimension {
            return Err(invalid(
                "model.sparsity",
                format!("{} exceeds dimension {}", self.sparsity, self.dimension),
            ));
        }
        if !self.coefficient.is_finite() {
            return Err(invalid("model.coefficient", "must be finite"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid("model.noise_variance", "must be finite and >= 0"));
        }
        let dist = match (self.distribution, self.bernoulli_p) {
            (DistributionSpec::Uniform, None) => CovariateDistribution::uniform(self.dimension),
            (DistributionSpec::Uniform, Some(_)) => {
                return Err(invalid("model.bernoulli_p", "only valid with distribution = \"boolean\""))
            }
            (DistributionSpec::Boolean, None) => {
                return Err(invalid("model.bernoulli_p", "required when distribution = \"boolean\""))
            }
            (DistributionSpec::Boolean, Some(p)) => {
                if !(p > 0.0 && p <= 0.5) {
                    return Err(invalid("model.bernoulli_p", format!("{p} is outside (0, 0.5]")));
                }
                CovariateDistribution::boolean_uniform_p(self.dimension, p)
            }
        }
        .map_err(|e| invalid("model", e.to_string()))?;
        let kind = match self.component_kind {
            KindSpec::Linear => ComponentKind::Linear,
            KindSpec::Square => ComponentKind::Square,
        };
        AdditiveModel::sparse(kind, self.sparsity, self.coefficient, self.noise_variance, dist)
            .map_err(|e| invalid("model", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub mtry: Option<usize>,
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_min_samples_leaf() -> usize {
    5
}
fn default_n_trees() -> usize {
    100
}
fn default_true() -> bool {
    true
}

impl Default for FitSpec {
    fn default() -> Self {
        let p = FitParams::default();
        Self {
            min_samples_leaf: p.min_samples_leaf,
            max_depth: p.max_depth,
            mtry: p.mtry,
            n_trees: p.n_trees,
            bootstrap: p.bootstrap,
        }
    }
}

impl From<&FitSpec> for FitParams {
    fn from(f: &FitSpec) -> Self {
        FitParams {
            min_samples_leaf: f.min_samples_leaf,
            max_depth: f.max_depth,
            mtry: f.mtry,
            n_trees: f.n_trees,
            bootstrap: f.bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_grid")]
    n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default = "default_test_size")]
    test_size: usize,
    #[serde(default = "default_estimators")]
    estimators: Vec<EstimatorId>,
    model: ModelSpec,
    #[serde(default)]
    fit: FitSpec,
}

fn default_grid() -> Vec<usize> {
    DEFAULT_N_GRID.to_vec()
}
fn default_replicates() -> usize {
    25
}
fn default_test_size() -> usize {
    500
}
fn default_estimators() -> Vec<EstimatorId> {
    vec![EstimatorId::HonestCart]
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub test_size: usize,
    pub estimators: Vec<EstimatorId>,
    pub model_spec: ModelSpec,
    pub model: AdditiveModel,
    pub fit: FitParams,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::validate(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    fn validate(raw: RawConfig) -> Result<Self, ConfigError> {
        if raw.n_grid.is_empty() {
            return Err(invalid("n_grid", "must not be empty"));
        }
        if raw.n_grid[0] == 0 {
            return Err(invalid("n_grid", "entries must be >= 1"));
        }
        if raw.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_grid", "must be strictly ascending"));
        }
        if raw.replicates == 0 {
            return Err(invalid("replicates", "must be >= 1"));
        }
        if raw.test_size == 0 {
            return Err(invalid("test_size", "must be >= 1"));
        }
        if raw.estimators.is_empty() {
            return Err(invalid("estimators", "must not be empty"));
        }
        let mut sorted = raw.estimators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != raw.estimators.len() {
            return Err(invalid("estimators", "contains duplicates"));
        }
        let model = raw.model.build()?;
        let fit = FitParams::from(&raw.fit);
        fit.validate(model.dim()).map_err(|e| invalid("fit", e.to_string()))?;
        if raw.estimators.contains(&EstimatorId::OraclePartition) {
            if model.distribution().is_boolean() {
                return Err(invalid("estimators", "oracle_partition needs distribution = \"uniform\""));
            }
            if model.noise_variance() <= 0.0 {
                return Err(invalid("estimators", "oracle_partition needs model.noise_variance > 0"));
            }
            if model.sparsity() == 0 || model.beta_max() <= 0.0 {
                return Err(invalid("estimators", "oracle_partition needs a nonzero model"));
            }
        }
        Ok(Self {
            seed: raw.seed,
            n_grid: raw.n_grid,
            replicates: raw.replicates,
            test_size: raw.test_size,
            estimators: raw.estimators,
            model_spec: raw.model,
            model,
            fit,
        })
    }
}
