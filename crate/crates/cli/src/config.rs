use std::fmt;
use std::path::{Path, PathBuf};

use dncl::ensemble::{MeanGradient, TrainConfig};
use dncl::losses::{LossKind, TUKEY_C};
use dncl::netcore::{Activation, LayerSpec, SgdConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Dynamics,
    Surface,
    Train,
    Eval,
    Decompose,
    Rademacher,
    GenData,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dynamics => "dynamics",
            Self::Surface => "surface",
            Self::Train => "train",
            Self::Eval => "eval",
            Self::Decompose => "decompose",
            Self::Rademacher => "rademacher",
            Self::GenData => "gen-data",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fully resolved run configuration. Every key has a default; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Set from the subcommand when absent; a mismatch is an error.
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub data: DataConfig,
    pub dynamics: DynamicsConfig,
    pub surface: SurfaceConfig,
    pub decompose: DecomposeConfig,
    pub rademacher: RademacherConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            data: DataConfig::default(),
            dynamics: DynamicsConfig::default(),
            surface: SurfaceConfig::default(),
            decompose: DecomposeConfig::default(),
            rademacher: RademacherConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Tanh,
    Relu,
    Identity,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Relu => Activation::Relu,
            ActivationName::Identity => Activation::Identity,
        }
    }
}

/// Shared trunk of dense layers, each followed by the activation, feeding
/// `k` linear heads that read disjoint blocks of the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub k: usize,
    pub trunk: Vec<usize>,
    pub activation: ActivationName,
    pub weighted: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 3,
            trunk: vec![48, 24],
            activation: ActivationName::Tanh,
            weighted: false,
        }
    }
}

impl ModelConfig {
    pub fn trunk_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(2 * self.trunk.len());
        let mut width = input_dim;
        for &w in &self.trunk {
            specs.push(LayerSpec::Dense { in_dim: width, out_dim: w });
            specs.push(LayerSpec::Activation(self.activation.into()));
            width = w;
        }
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    L2,
    Smoothl1,
    Tukey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanGradientName {
    Full,
    Detached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub loss: LossName,
    pub smoothl1_threshold: f64,
    pub tukey_c: f64,
    pub mean_gradient: MeanGradientName,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 16,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 0.0,
            lambda: 5e-3,
            loss: LossName::L2,
            smoothl1_threshold: 1.0,
            tukey_c: TUKEY_C,
            mean_gradient: MeanGradientName::Full,
        }
    }
}

impl TrainSection {
    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            LossName::L2 => LossKind::L2,
            LossName::Smoothl1 => LossKind::SmoothL1 {
                threshold: self.smoothl1_threshold,
            },
            LossName::Tukey => LossKind::Tukey { c: self.tukey_c },
        }
    }

    pub fn to_train_config(&self, lambda: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            sgd: SgdConfig {
                lr: self.lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
            },
            lambda,
            seed,
            loss: self.loss_kind(),
            mean_gradient: match self.mean_gradient {
                MeanGradientName::Full => MeanGradient::Full,
                MeanGradientName::Detached => MeanGradient::Detached,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Spirals,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// CSV input; required when `source = "csv"`.
    pub path: Option<PathBuf>,
    /// Column names or zero-based indices.
    pub features: Vec<String>,
    pub targets: Vec<String>,
    pub test_fraction: f64,
    /// Multiplies every feature after loading (and after standardizing).
    pub input_scale: f64,
    pub standardize: bool,
    pub spirals: SpiralsSection,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Spirals,
            path: None,
            features: Vec::new(),
            targets: Vec::new(),
            test_fraction: 0.2,
            input_scale: 3.0,
            standardize: false,
            spirals: SpiralsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpiralsSection {
    pub points_per_arm: usize,
    pub turns: f64,
    pub noise: f64,
}

impl Default for SpiralsSection {
    fn default() -> Self {
        let d = dncl::data::SpiralsSpec::default();
        Self {
            points_per_arm: d.points_per_arm,
            turns: d.turns,
            noise: d.noise,
        }
    }
}

impl SpiralsSection {
    pub fn spec(&self, seed: u64) -> dncl::data::SpiralsSpec {
        dncl::data::SpiralsSpec {
            points_per_arm: self.points_per_arm,
            turns: self.turns,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub target: f64,
    pub regressors: usize,
    pub iterations: usize,
    pub lr: f64,
    pub lambda: f64,
    pub init_low: f64,
    pub init_high: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let d = dncl::data::ScalarToySpec::default();
        Self {
            target: d.target,
            regressors: d.regressors,
            iterations: d.iterations,
            lr: d.lr,
            lambda: 5e-3,
            init_low: d.init_low,
            init_high: d.init_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    /// Lattice points per axis.
    pub resolution: usize,
    /// Fraction of the data extent added on each side of the lattice.
    pub margin: f64,
    /// λ of the NCL regime; the conventional regime uses 0.
    pub lambda: f64,
    /// Size of the independently drawn held-out spirals set, per arm.
    pub test_points_per_arm: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            resolution: 200,
            margin: 0.1,
            lambda: 0.2,
            test_points_per_arm: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    pub trials: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { trials: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLayout {
    /// i.i.d. standard normal features in every block.
    Isotropic,
    /// All feature mass in the first block, zeros elsewhere.
    SingleBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RademacherConfig {
    pub ks: Vec<usize>,
    pub trials: usize,
    pub samples: usize,
    pub block_dim: usize,
    pub bound: f64,
    pub layout: FeatureLayout,
}

impl Default for RademacherConfig {
    fn default() -> Self {
        Self {
            ks: vec![2, 4, 8],
            trials: 10_000,
            samples: 100,
            block_dim: 16,
            bound: 1.0,
            layout: FeatureLayout::Isotropic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Defaults to `<out>/model.ncl`.
    pub checkpoint: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Binds the config to `kind`, failing if the file names another one.
    pub fn resolve(mut self, kind: ExperimentKind) -> Result<Self> {
        match self.experiment {
            Some(k) if k != kind => {
                return Err(CliError::Config(format!(
                    "config is for experiment `{k}`, but `{kind}` was requested"
                )))
            }
            _ => self.experiment = Some(kind),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let m = &self.model;
        if m.k == 0 {
            return bad("model.k must be >= 1".into());
        }
        if m.trunk.is_empty() || m.trunk.contains(&0) {
            return bad("model.trunk must list positive layer widths".into());
        }
        let last = *m.trunk.last().expect("non-empty");
        if !last.is_multiple_of(m.k) {
            return bad(format!(
                "last trunk width {last} is not divisible by model.k = {}",
                m.k
            ));
        }
        self.train
            .to_train_config(self.train.lambda, self.seed)
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        if !(0.0..1.0).contains(&self.surface.lambda) {
            return bad(format!("surface.lambda must be in [0, 1), got {}", self.surface.lambda));
        }
        let d = &self.data;
        if !(0.0..1.0).contains(&d.test_fraction) {
            return bad(format!("data.test_fraction must be in [0, 1), got {}", d.test_fraction));
        }
        if !(d.input_scale.is_finite() && d.input_scale > 0.0) {
            return bad(format!("data.input_scale must be > 0, got {}", d.input_scale));
        }
        if d.source == DataSource::Csv
            && (d.path.is_none() || d.features.is_empty() || d.targets.is_empty())
        {
            return bad("data.source = \"csv\" needs data.path, data.features and data.targets".into());
        }
        let s = &d.spirals;
        if s.points_per_arm == 0 || !(s.turns > 0.0) || !(s.noise >= 0.0) {
            return bad(format!("invalid data.spirals {s:?}"));
        }
        let dy = &self.dynamics;
        if dy.regressors == 0 || dy.iterations == 0 || !(dy.init_low < dy.init_high) {
            return bad(format!("invalid dynamics section {dy:?}"));
        }
        if !(dy.lr.is_finite() && dy.lr > 0.0) || !(0.0..1.0).contains(&dy.lambda) {
            return bad("dynamics.lr must be > 0 and dynamics.lambda in [0, 1)".into());
        }
        let sf = &self.surface;
        if sf.resolution < 2 || !(sf.margin >= 0.0) || sf.test_points_per_arm == 0 {
            return bad(format!("invalid surface section {sf:?}"));
        }
        let r = &self.rademacher;
        if r.ks.is_empty() || r.ks.contains(&0) || r.trials == 0 || r.samples == 0 || r.block_dim == 0 {
            return bad(format!("invalid rademacher section {r:?}"));
        }
        if !(r.bound.is_finite() && r.bound > 0.0) {
            return bad(format!("rademacher.bound must be > 0, got {}", r.bound));
        }
        Ok(())
    }
}
