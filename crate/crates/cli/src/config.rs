//! Run configuration file (TOML). Unknown keys are rejected; omitted values
//! fall back to per-dataset defaults.
//!
//! ```toml
//! out_dir = "runs/digits"
//!
//! [dataset]
//! name = "digits"        # digits | mnist | fashion-mnist
//! split_seed = 0
//! train_subset = 0       # 0 = full training set
//!
//! [network]
//! layers = [64, 20, 10]
//! mode = "real"          # real | fixed
//! t_max = 15
//! thresholds = [4.0, 6.234]
//! init_low = -0.16
//! init_high = 0.446
//! init_seed = 1
//!
//! [training]
//! epochs = 60
//! lr = 0.047
//! gamma = 7
//! lr_decay = 0.92
//! backward_threshold_factor = 3.0
//!
//! [hardware]
//! parallelism = 4
//! fmax_mhz = 142.45
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use snn_core::datasets::DatasetName;
use snn_core::hwmodel::HwConfig;
use snn_core::network::{InitConfig, NormalizationRule};
use snn_core::training::TrainConfig;
use snn_core::{Fixed, QFormat};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub hardware: HardwareSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: Option<String>,
    pub split_seed: Option<u64>,
    pub train_subset: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub layers: Option<Vec<usize>>,
    pub mode: Option<String>,
    pub t_max: Option<u32>,
    /// One value per non-input layer, or a single value for all.
    pub thresholds: Option<Vec<f64>>,
    pub init_low: Option<f64>,
    pub init_high: Option<f64>,
    pub init_seed: Option<u64>,
    pub weight_format: Option<String>,
    pub potential_format: Option<String>,
    pub delta_format: Option<String>,
    pub rate_format: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub gamma: Option<u32>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
    pub eval_every: Option<usize>,
    pub lr_decay: Option<f64>,
    pub backward_threshold_factor: Option<f64>,
    /// "magnitude" (default) or "signed".
    pub normalization: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSection {
    pub parallelism: Option<usize>,
    pub fmax_mhz: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Real,
    Fixed,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(Mode::Real),
            "fixed" => Ok(Mode::Fixed),
            other => Err(format!("unknown mode {other:?} (expected real or fixed)")),
        }
    }
}

/// Fully resolved settings for one training run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub out_dir: PathBuf,
    pub dataset: DatasetName,
    pub split_seed: u64,
    pub train_subset: usize,
    pub layers: Vec<usize>,
    pub mode: Mode,
    pub fixed: Fixed,
    pub t_max: u32,
    pub thresholds: Vec<f64>,
    pub init: InitConfig,
    pub train: TrainConfig,
    pub hw: HwConfig,
}

/// Built-in defaults that depend on the dataset.
struct Defaults {
    layers: &'static [usize],
    t_max: u32,
    epochs: usize,
    gamma: u32,
    lr: f64,
    thresholds: &'static [f64],
    init: (f64, f64),
    lr_decay: Option<f64>,
    backward_factor: f64,
}

fn defaults(name: DatasetName) -> Defaults {
    match name {
        DatasetName::Digits => Defaults {
            layers: &[64, 20, 10],
            t_max: 15,
            epochs: 60,
            gamma: 7,
            lr: 0.047,
            thresholds: &[4.0, 6.234],
            init: (-0.16, 0.446),
            lr_decay: Some(0.92),
            backward_factor: 3.0,
        },
        DatasetName::Mnist | DatasetName::FashionMnist => Defaults {
            layers: &[784, 400, 10],
            t_max: 255,
            epochs: 50,
            gamma: 3,
            lr: 0.01,
            thresholds: &[2.0, 4.0],
            init: (-0.05, 0.1),
            lr_decay: None,
            backward_factor: 1.0,
        },
    }
}

/// Default target margin, used by commands that only need the loss.
pub fn default_gamma(name: DatasetName) -> u32 {
    defaults(name).gamma
}

fn format(value: &Option<String>, fallback: QFormat, key: &str) -> Result<QFormat, CliError> {
    match value {
        None => Ok(fallback),
        Some(s) => s
            .parse()
            .map_err(|e| CliError::Config(format!("network.{key}: {e}"))),
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<String>,
    pub mode: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub gamma: Option<u32>,
    pub seed: Option<u64>,
    pub train_subset: Option<usize>,
}

impl RunConfig {
    pub fn resolve(&self, o: &Overrides) -> Result<Resolved, CliError> {
        let cfg = |msg: String| CliError::Config(msg);
        let name_str = o
            .dataset
            .clone()
            .or_else(|| self.dataset.name.clone())
            .ok_or_else(|| cfg("dataset.name is required".into()))?;
        let dataset: DatasetName = name_str.parse().map_err(|e: snn_core::Error| cfg(e.to_string()))?;
        let d = defaults(dataset);
        let net = &self.network;
        let tr = &self.training;

        let layers = net.layers.clone().unwrap_or_else(|| d.layers.to_vec());
        if layers.len() < 2 || layers.contains(&0) {
            return Err(cfg(format!("network.layers must list at least two positive sizes, got {layers:?}")));
        }
        let n_layers = layers.len() - 1;
        let thresholds = match &net.thresholds {
            None if d.thresholds.len() == n_layers => d.thresholds.to_vec(),
            None => {
                let last = *d.thresholds.last().expect("defaults are non-empty");
                let mut t = vec![d.thresholds[0]; n_layers - 1];
                t.push(last);
                t
            }
            Some(t) if t.len() == 1 => vec![t[0]; n_layers],
            Some(t) if t.len() == n_layers => t.clone(),
            Some(t) => {
                return Err(cfg(format!(
                    "network.thresholds has {} values for {n_layers} layers",
                    t.len()
                )))
            }
        };
        if thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(cfg("network.thresholds must be positive".into()));
        }
        let mode: Mode = o
            .mode
            .clone()
            .or_else(|| net.mode.clone())
            .unwrap_or_else(|| "real".into())
            .parse()
            .map_err(cfg)?;
        let base = Fixed::default();
        let fixed = Fixed::new(
            format(&net.weight_format, base.weight, "weight_format")?,
            format(&net.potential_format, base.potential, "potential_format")?,
            format(&net.delta_format, base.delta, "delta_format")?,
            format(&net.rate_format, base.rate, "rate_format")?,
        )
        .map_err(|e| cfg(e.to_string()))?;
        let t_max = net.t_max.unwrap_or(d.t_max);
        if t_max < 1 {
            return Err(cfg("network.t_max must be at least 1".into()));
        }
        let init = InitConfig {
            low: net.init_low.unwrap_or(d.init.0),
            high: net.init_high.unwrap_or(d.init.1),
            seed: net.init_seed.unwrap_or(1),
        };
        if !(init.low <= init.high) {
            return Err(cfg("network.init_low must not exceed init_high".into()));
        }
        let normalization = match tr.normalization.as_deref() {
            None | Some("magnitude") => NormalizationRule::MagnitudeSum,
            Some("signed") => NormalizationRule::SignedSum,
            Some(other) => {
                return Err(cfg(format!(
                    "training.normalization must be magnitude or signed, got {other:?}"
                )))
            }
        };
        let train = TrainConfig {
            epochs: o.epochs.or(tr.epochs).unwrap_or(d.epochs),
            lr: o.lr.or(tr.lr).unwrap_or(d.lr),
            gamma: o.gamma.or(tr.gamma).unwrap_or(d.gamma),
            seed: o.seed.or(tr.seed).unwrap_or(1),
            shuffle: tr.shuffle.unwrap_or(true),
            eval_every: tr.eval_every.unwrap_or(1),
            lr_decay: tr.lr_decay.or(d.lr_decay),
            backward_threshold_factor: tr.backward_threshold_factor.unwrap_or(d.backward_factor),
            normalization,
        };
        train.validate().map_err(|e| cfg(e.to_string()))?;
        let hw = self.hw_config()?;
        Ok(Resolved {
            out_dir: o
                .out_dir
                .clone()
                .or_else(|| self.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            dataset,
            split_seed: self.dataset.split_seed.unwrap_or(0),
            train_subset: o.train_subset.or(self.dataset.train_subset).unwrap_or(0),
            layers,
            mode,
            fixed,
            t_max,
            thresholds,
            init,
            train,
            hw,
        })
    }

    pub fn hw_config(&self) -> Result<HwConfig, CliError> {
        let mut hw = HwConfig::default();
        if let Some(p) = self.hardware.parallelism {
            hw.parallelism = p;
        }
        if let Some(f) = self.hardware.fmax_mhz {
            hw.fmax_hz = f * 1e6;
        }
        if let Some(w) = &self.network.weight_format {
            hw.weight_format = w
                .parse()
                .map_err(|e| CliError::Config(format!("network.weight_format: {e}")))?;
        }
        hw.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(hw)
    }
}
