//! Experiment configuration and orchestration.
//!
//! A run is described by an [`ExperimentConfig`], stored on disk as TOML
//! with one table per concern:
//!
//! ```toml
//! [train]
//! regime = "noise_mod"   # standard | noise_mod | adv_train | mult_approx
//! epochs = 50
//! batch_size = 64
//! lr = 0.001
//! seed = 0
//!
//! [model]
//! arch = "fcnn6"         # mlp3 | fcnn6 | lenet
//!
//! [data]
//! dataset = "mnist"      # mnist | cifar10 | synthetic
//! path = "data/mnist"
//!
//! [modulation]
//! beta = 0.5
//! noise = "gaussian"
//!
//! [attack]
//! epsilon = 0.03137254901960784
//! ```
//!
//! Settings resolve in the order defaults, profile preset, config file,
//! `NOISEMOD_SEED`, command-line flags; later sources win.

mod studies;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use studies::{
    bench, run_experiment, sweep_beta, sweep_noise, visualize, BenchReport, BenchRow,
    ExperimentReport, RunSummary, SweepRow, VisualizeReport, BETA_SWEEP,
};
pub use train::{evaluate, prepare_data, train, EvalResult, PreparedData, TrainOutcome};

use crate::adversarial::AttackConfig;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelSpec};
use crate::rng::NoiseKind;

pub const SEED_ENV: &str = "NOISEMOD_SEED";
pub const MNIST_DIR_ENV: &str = "NOISEMOD_MNIST_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Regime {
    Standard,
    NoiseMod,
    AdvTrain,
    MultApprox,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Standard => "standard",
            Regime::NoiseMod => "noise_mod",
            Regime::AdvTrain => "adv_train",
            Regime::MultApprox => "mult_approx",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

/// Presets for data size and epoch count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 10k training / 2k test examples, 10 epochs.
    Desk,
    /// Full data, 50 epochs.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Also score VII on the test split after every epoch.
    pub vii_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Standard,
            epochs: 50,
            batch_size: 64,
            lr: 0.001,
            seed: 0,
            vii_every_epoch: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// Per-layer widths; the architecture's defaults when absent.
    pub widths: Option<Vec<usize>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Fcnn6,
            widths: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    /// Directory holding the dataset files.
    pub path: Option<PathBuf>,
    /// Use only the first `n` training examples (before the validation split).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Tail fraction of the training examples held out for validation.
    pub val_fraction: f64,
    /// Generator settings; `count` is the training-set size.
    pub synthetic: SyntheticSpec,
    pub synthetic_test_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            path: None,
            train_limit: None,
            test_limit: None,
            val_fraction: 0.1,
            synthetic: SyntheticSpec::default(),
            synthetic_test_count: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    pub beta: f64,
    pub noise: NoiseKind,
    /// Draw one carrier per example up front and reuse it every epoch.
    pub fixed_carriers: bool,
    /// Noise scale of the multiplicative baseline `x * (1 + alpha * noise)`.
    pub mult_alpha: f64,
    pub space: ModulationSpace,
}

/// Where the training-input multiplier acts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModulationSpace {
    /// On `[0, 1]` pixels, before normalization. Zero pixels stay zero.
    Pixel,
    /// On the normalized input `(x - mean) / std` the network sees, so a
    /// black background is modulated like everything else.
    #[default]
    Normalized,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            noise: NoiseKind::Gaussian,
            fixed_carriers: false,
            mult_alpha: 1.0,
            space: ModulationSpace::Normalized,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Experiment id; derived from the settings when absent.
    pub name: Option<String>,
    pub outdir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            name: None,
            outdir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub modulation: ModulationConfig,
    pub attack: AttackConfig,
    pub output: OutputConfig,
}

/// Command-line overrides; `None` leaves the resolved value alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub regime: Option<Regime>,
    pub arch: Option<Architecture>,
    pub widths: Option<Vec<usize>>,
    pub dataset: Option<DatasetKind>,
    pub data_path: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub noise: Option<NoiseKind>,
    pub fixed_carriers: bool,
    pub mult_alpha: Option<f64>,
    pub space: Option<ModulationSpace>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub no_box_clamp: bool,
    pub no_random_init: bool,
    pub vii_every_epoch: bool,
    pub name: Option<String>,
    pub outdir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = Self::default();
        if profile == Profile::Desk {
            cfg.train.epochs = 10;
            cfg.data.train_limit = Some(10_000);
            cfg.data.test_limit = Some(2_000);
        }
        cfg
    }

    /// Defaults, then `profile`, then the TOML `text` on top.
    pub fn from_toml(text: &str, profile: Profile) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, profile: Profile) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply a `NOISEMOD_SEED` value.
    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = o.$field.clone() { $target = v; })*
            };
        }
        set! {
            regime => self.train.regime,
            arch => self.model.arch,
            dataset => self.data.dataset,
            epochs => self.train.epochs,
            batch_size => self.train.batch_size,
            lr => self.train.lr,
            seed => self.train.seed,
            beta => self.modulation.beta,
            noise => self.modulation.noise,
            mult_alpha => self.modulation.mult_alpha,
            space => self.modulation.space,
            epsilon => self.attack.epsilon,
            alpha => self.attack.alpha,
            steps => self.attack.steps,
            outdir => self.output.outdir,
        }
        if o.widths.is_some() {
            self.model.widths = o.widths.clone();
        }
        if o.data_path.is_some() {
            self.data.path = o.data_path.clone();
        }
        if o.train_limit.is_some() {
            self.data.train_limit = o.train_limit;
        }
        if o.test_limit.is_some() {
            self.data.test_limit = o.test_limit;
        }
        if o.name.is_some() {
            self.output.name = o.name.clone();
        }
        self.modulation.fixed_carriers |= o.fixed_carriers;
        self.attack.box_clamp &= !o.no_box_clamp;
        self.attack.random_init &= !o.no_random_init;
        self.train.vii_every_epoch |= o.vii_every_epoch;
    }

    /// Full resolution: profile, optional file, environment seed, flags.
    pub fn resolve(
        file: Option<&Path>,
        profile: Profile,
        env_seed: Option<&str>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => Self::load(path, profile)?,
            None => Self::for_profile(profile),
        };
        cfg.apply_env_seed(env_seed)?;
        cfg.apply_overrides(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.train.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.train.lr));
        }
        if !(0.0..=1.0).contains(&self.modulation.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.modulation.beta));
        }
        if !(self.modulation.mult_alpha >= 0.0 && self.modulation.mult_alpha.is_finite()) {
            return bad(format!("mult_alpha must be nonnegative, got {}", self.modulation.mult_alpha));
        }
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return bad(format!("val_fraction must lie in (0, 1), got {}", self.data.val_fraction));
        }
        self.attack
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(w) = &self.model.widths {
            if w.contains(&0) {
                return bad("model widths must be positive".into());
            }
        }
        Ok(())
    }

    pub fn model_spec(&self, input_shape: [usize; 3], classes: usize) -> ModelSpec {
        let spec = ModelSpec::new(self.model.arch, input_shape, classes);
        match &self.model.widths {
            Some(w) => spec.with_widths(w.clone()),
            None => spec,
        }
    }

    /// SHA-256 of the settings that affect results (everything but the output section).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputConfig::default();
        let text = canon.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Directory name under `outdir`.
    pub fn experiment_id(&self) -> String {
        if let Some(name) = &self.output.name {
            return name.clone();
        }
        let mut detail = match self.train.regime {
            Regime::Standard => String::new(),
            Regime::NoiseMod => format!("-{}-b{}", self.modulation.noise, self.modulation.beta),
            Regime::AdvTrain => format!("-eps{:.4}-t{}", self.attack.epsilon, self.attack.steps),
            Regime::MultApprox => format!("-{}-a{}", self.modulation.noise, self.modulation.mult_alpha),
        };
        let modulated = matches!(self.train.regime, Regime::NoiseMod | Regime::MultApprox);
        if modulated && self.modulation.space == ModulationSpace::Pixel {
            detail.push_str("-pixel");
        }
        format!(
            "{}-{}{}-s{}-{}",
            self.train.regime,
            self.model.arch,
            detail,
            self.train.seed,
            &self.hash()[..8]
        )
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.outdir.join(self.experiment_id())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
