//! Experiment configuration files (TOML, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gentune_core::data::CorrelatedDesign;
use gentune_core::generator::{SgdConfig, SupervisedConfig};
use gentune_core::weights::WeightKind;
use gentune_mnist::TrainConfig;

use crate::error::{ExpError, ExpResult};

pub const TOY_FILE: &str = "toy_gms.toml";
pub const RIDGE_FILE: &str = "ridge_demo.toml";
pub const QUANTILE_FILE: &str = "quantile_demo.toml";
pub const MNIST_FILE: &str = "mnist_demo.toml";
pub const ECME_FILE: &str = "ecme_demo.toml";

/// Files `run_all` expects in a config directory.
pub const RUN_ALL_FILES: [&str; 4] = [TOY_FILE, RIDGE_FILE, QUANTILE_FILE, MNIST_FILE];

/// Log-spaced grid `lo..=hi` with `points` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn values(&self) -> ExpResult<Vec<f64>> {
        gentune_core::select::log_grid(self.lo, self.hi, self.points)
            .map_err(|e| ExpError::Config(format!("grid: {e}")))
    }
}

/// The `[run]` table shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    /// Output directory, relative to the config file unless absolute.
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("../results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionBudget {
    /// Steps are `base_steps + steps_per_label * B` for budget `B`.
    pub base_steps: usize,
    pub steps_per_label: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_final_fraction: f64,
    /// Also emit rows whose step count matches the supervised run's
    /// wall-clock. These rows depend on timing and are not reproducible.
    #[serde(default)]
    pub time_matched: bool,
}

impl CriterionBudget {
    pub fn sgd(&self, steps: usize) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            steps,
            batch_size: self.batch_size,
            lr_final_fraction: self.lr_final_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub run: Common,
    pub weights: WeightKind,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub budgets: Vec<usize>,
    pub ipl_draws: usize,
    pub simulation: CorrelatedDesign,
    pub supervised: SupervisedConfig,
    pub criterion: CriterionBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    pub run: Common,
    pub folds: usize,
    pub test_rows: usize,
    /// Refit the amortized selection exactly on the full training set.
    #[serde(default = "yes")]
    pub refit: bool,
    pub simulation: CorrelatedDesign,
    pub grid: GridConfig,
    pub generator: RidgeGenerator,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeGenerator {
    pub lambda_degree: usize,
    pub sgd: SgdConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationScale {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    /// Noise scale is `scale0 + scale1 * x` with `x ~ Uniform(0, 1)`.
    pub scale0: f64,
    pub scale1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileDemoConfig {
    pub run: Common,
    pub levels: Vec<f64>,
    pub weights: WeightKind,
    pub max_iters: usize,
    pub tol: f64,
    pub simulation: LocationScale,
    pub grid: GridConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistData {
    pub dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    #[serde(default = "yes")]
    pub verify_sha256: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistModel {
    pub hidden: usize,
    pub rank: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Feed the batch mean weight to the hypernet (only with `wbb`).
    #[serde(default)]
    pub omega_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistDemoConfig {
    pub run: Common,
    pub grid_points: usize,
    /// Extra fixed-λ baselines trained besides the one at the curve argmin.
    #[serde(default)]
    pub extra_baselines: Vec<f64>,
    pub data: MnistData,
    pub model: MnistModel,
    pub hypernet: TrainConfig,
    pub baseline: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcmeDemoConfig {
    pub run: Common,
    pub n: usize,
    pub p: usize,
    pub noise_sd: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub max_iters: usize,
    pub tol: f64,
}

/// A parsed config with the file it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub path: PathBuf,
    /// SHA-256 of the file contents, hex encoded.
    pub hash: String,
}

impl<T> Loaded<T> {
    /// Resolves `p` against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> ExpResult<T> {
    toml::from_str(text).map_err(|e| ExpError::Config(format!("{origin}: {e}")))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> ExpResult<Loaded<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            ExpError::Config(format!("{}: no such config file", path.display()))
        }
        _ => ExpError::io(path, e),
    })?;
    Ok(Loaded {
        config: parse(&text, &path.display().to_string())?,
        path: path.to_path_buf(),
        hash: sha256_hex(text.as_bytes()),
    })
}
