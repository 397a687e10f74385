//! TOML run configuration shared by training, evaluation and sweeps.
//!
//! ```toml
//! data_dir = "data"          # optional
//! output_dir = "runs/gl"     # optional
//! train_split = "train"
//! test_split = "test"
//!
//! [loss]
//! kind = "gl"                # gl, cl, mse, tmse, sisdr
//! gamma = 2.0
//! alpha = 1.0
//! mu = 1.0
//! beta0_db = -20.0           # -inf gives beta0 = 0
//!
//! [train]
//! epochs = 30
//! batch_size = 4
//! learning_rate = 1e-3
//! adam_beta1 = 0.9
//! adam_beta2 = 0.999
//! adam_eps = 1e-8
//! seed = 0
//!
//! [model]
//! context = 5
//! hidden_sizes = [256, 256]
//! activation = "elu"
//! init_seed = 0
//!
//! [stft]                     # optional; 32 ms sqrt-Hann frames, 50 % hop by default
//! frame_len = 512
//! hop = 256
//! fft_len = 512
//! window = "sqrt_hann"
//!
//! [sweep]                    # optional grid for generalized-loss sweeps
//! gammas = [2.0]
//! alphas = [1.0]
//! mus = [1.0]
//! beta0_dbs = [-10.0, -20.0, -30.0]
//! ```
//! Every section and key is optional; missing values take the defaults shown.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Experiment, SweepGrid};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossParams};
use crate::model::{Activation, MaskNetConfig, TrainConfig};
use crate::signal::{StftConfig, WindowKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kind: String,
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
    pub beta0_db: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            kind: "gl".into(),
            gamma: 2.0,
            alpha: 1.0,
            mu: 1.0,
            beta0_db: -20.0,
        }
    }
}

impl LossSection {
    pub fn loss_kind(&self) -> Result<LossKind> {
        match self.kind.as_str() {
            "gl" => Ok(LossKind::Generalized(LossParams::with_beta0_db(
                self.gamma,
                self.alpha,
                self.mu,
                self.beta0_db,
            )?)),
            "cl" => {
                if !(self.mu >= 0.0 && self.mu.is_finite()) {
                    return Err(Error::invalid(format!("mu must be >= 0, got {}", self.mu)));
                }
                Ok(LossKind::Components { mu: self.mu })
            }
            "mse" => Ok(LossKind::MseMagnitude),
            "tmse" => Ok(LossKind::TimeMse),
            "sisdr" => Ok(LossKind::SiSdr),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected gl, cl, mse, tmse or sisdr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub context: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = MaskNetConfig::with_defaults(1);
        Self {
            context: m.context,
            hidden_sizes: m.hidden_sizes,
            activation: m.activation,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    #[serde(default = "default_window")]
    pub window: WindowKind,
}

fn default_window() -> WindowKind {
    WindowKind::SqrtHann
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub mus: Vec<f64>,
    pub beta0_dbs: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gammas: vec![2.0],
            alphas: vec![1.0],
            mus: vec![1.0],
            beta0_dbs: vec![-10.0, -20.0, -30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub train_split: String,
    pub test_split: String,
    pub loss: LossSection,
    pub train: TrainSection,
    pub model: ModelSection,
    pub stft: Option<StftSection>,
    pub sweep: Option<SweepSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            output_dir: None,
            train_split: "train".into(),
            test_split: "test".into(),
            loss: LossSection::default(),
            train: TrainSection::default(),
            model: ModelSection::default(),
            stft: None,
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn stft_config(&self, sample_rate: u32) -> Result<StftConfig> {
        match &self.stft {
            Some(s) => StftConfig::new(s.frame_len, s.hop, s.fft_len, s.window),
            None => Ok(StftConfig::for_sample_rate(sample_rate)),
        }
    }

    /// Resolves the configuration for data recorded at `sample_rate`.
    pub fn experiment(&self, sample_rate: u32) -> Result<Experiment> {
        let stft = self.stft_config(sample_rate)?;
        let t = &self.train;
        let train = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            seed: t.seed,
            loss: self.loss.loss_kind()?,
        };
        train.validate()?;
        let net = MaskNetConfig {
            num_bins: stft.num_bins(),
            context: self.model.context,
            hidden_sizes: self.model.hidden_sizes.clone(),
            activation: self.model.activation,
        };
        net.validate()?;
        Ok(Experiment {
            stft,
            net,
            init_seed: self.model.init_seed,
            train,
        })
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        let s = self.sweep.clone().unwrap_or_default();
        SweepGrid {
            gammas: s.gammas,
            alphas: s.alphas,
            mus: s.mus,
            beta0_dbs: s.beta0_dbs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let config = RunConfig::from_toml_str("").unwrap();
        assert_eq!(config, RunConfig::default());
        let ex = config.experiment(16_000).unwrap();
        assert_eq!(ex.stft, StftConfig::default());
        assert_eq!(ex.net, MaskNetConfig::with_defaults(257));
        assert_eq!(ex.train, TrainConfig::default());
    }

    #[test]
    fn parses_full_config() {
        let text = r#"
            data_dir = "d"
            [loss]
            kind = "gl"
            beta0_db = -inf
            mu = 2.0
            [train]
            epochs = 3
            [model]
            hidden_sizes = [8]
            activation = "relu"
            [stft]
            frame_len = 256
            hop = 128
            fft_len = 256
            [sweep]
            mus = [0.5, 1.0]
        "#;
        let config = RunConfig::from_toml_str(text).unwrap();
        let ex = config.experiment(8000).unwrap();
        assert_eq!(ex.train.epochs, 3);
        assert_eq!(ex.net.num_bins, 129);
        match ex.train.loss {
            LossKind::Generalized(p) => assert_eq!((p.beta0(), p.mu()), (0.0, 2.0)),
            other => panic!("{other:?}"),
        }
        let grid = config.sweep_grid();
        assert_eq!(grid.mus, vec![0.5, 1.0]);
        assert_eq!(grid.beta0_dbs.len(), 3);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_toml_str("epochs = 3"), Err(Error::Config(_))));
        let bad_loss = RunConfig::from_toml_str("[loss]\nkind = \"l1\"").unwrap();
        assert!(matches!(bad_loss.experiment(16_000), Err(Error::Config(_))));
        let bad_gamma = RunConfig::from_toml_str("[loss]\ngamma = 0.5").unwrap();
        assert!(bad_gamma.experiment(16_000).is_err());
        let bad_stft = RunConfig::from_toml_str("[stft]\nframe_len = 100\nhop = 70\nfft_len = 100").unwrap();
        assert!(bad_stft.experiment(16_000).is_err());
        for kind in ["cl", "mse", "tmse", "sisdr"] {
            let c = RunConfig::from_toml_str(&format!("[loss]\nkind = \"{kind}\"")).unwrap();
            assert_eq!(c.experiment(16_000).unwrap().train.loss.short_name(), kind);
        }
    }
}
