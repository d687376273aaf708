//! The run configuration document (TOML).
//!
//! ```toml
//! seed = 7                 # required
//!
//! [data]                   # DataSection
//! [signal]                 # FrontendConfig
//! [scenegen]               # CorpusConfig
//! [model]                  # n_classes
//! [model.encoder]          # EncoderConfig
//! [fusion]                 # FusionConfig
//! [train]                  # TrainConfig
//! [train.augment]          # AugmentConfig
//! [eval]                   # EvalConfig
//! ```
//!
//! Every section and field except `seed` is optional; unknown keys are
//! rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};
use crate::eval::EvalConfig;
use crate::model::{EncoderConfig, FusionConfig, FusionStrategy, ModelConfig};
use crate::scenegen::{CorpusConfig, FrameGrid, Mode};
use crate::signal::FrontendConfig;
use crate::train::{AugmentConfig, TrainConfig};

/// Which pairs a run trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset directory written by `build-dataset`.
    pub dir: Option<PathBuf>,
    pub mode: Mode,
    /// Class ids removed from training and validation pairs.
    pub unseen_classes: Vec<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: None,
            mode: Mode::Strong,
            unseen_classes: Vec::new(),
        }
    }
}

impl DataSection {
    pub fn held_out(&self) -> BTreeSet<usize> {
        self.unseen_classes.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_classes: usize,
    pub encoder: EncoderConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_classes: 10,
            encoder: EncoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub signal: FrontendConfig,
    #[serde(default)]
    pub scenegen: CorpusConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Defaults everywhere, with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            data: DataSection::default(),
            signal: FrontendConfig::default(),
            scenegen: CorpusConfig::default(),
            model: ModelSection::default(),
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Small preset sized for a single CPU core: 32 mel bins, 4 s scenes
    /// with 1 to 3 events, a two-stage 16/32 encoder and short training.
    pub fn desk(seed: u64) -> Self {
        let n_mels = 32;
        Self {
            seed,
            data: DataSection::default(),
            signal: FrontendConfig {
                n_mels,
                ..FrontendConfig::default()
            },
            scenegen: CorpusConfig {
                n_scenes: 60,
                scene_duration: 4.0,
                min_events: 1,
                max_events: 3,
                min_event_duration: 0.4,
                max_event_duration: 1.5,
                refs_per_class: 4,
                ref_duration: 1.0,
                ..CorpusConfig::default()
            },
            model: ModelSection {
                n_classes: 10,
                encoder: EncoderConfig {
                    n_mels,
                    stem_kernel: (2, 4),
                    stage_dims: vec![16, 32],
                    stage_depths: vec![1, 1],
                    downsample: vec![(2, 2)],
                    dw_kernel: 5,
                    share_weights: true,
                    ..EncoderConfig::default()
                },
            },
            fusion: FusionConfig {
                strategy: FusionStrategy::Multiply,
                projected_dim: 64,
                attention_heads: 2,
                proj_kernel: 1,
            },
            train: TrainConfig {
                epochs: 12,
                batch_size: 8,
                lr: 1e-3,
                augment: AugmentConfig {
                    freq_mask_max_bins: 4,
                    time_mask_max_frames: 12,
                    max_shift_frames: 8,
                    augment_reference: false,
                },
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }

    /// Full-scale widths (F = 768, F' = 3072) on the default front-end.
    pub fn full_scale(seed: u64) -> Self {
        let full = ModelConfig::full_scale();
        Self {
            model: ModelSection {
                n_classes: full.n_classes,
                encoder: full.encoder,
            },
            fusion: full.fusion,
            ..Self::with_seed(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "default" => Ok(Self::with_seed(seed)),
            "desk" => Ok(Self::desk(seed)),
            "full" => Ok(Self::full_scale(seed)),
            other => Err(TsdError::Config(format!("unknown preset `{other}` (default, desk, full)"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with_seed(text, None)
    }

    /// Parses a document; `seed`, when given, replaces the document's seed
    /// (which may then be absent).
    pub fn from_toml_str_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| TsdError::Config(e.to_string()))?;
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| TsdError::Config(format!("seed {s} exceeds the TOML integer range")))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| TsdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        Self::from_toml_str_with_seed(&std::fs::read_to_string(path)?, seed)
            .map_err(|e| TsdError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| TsdError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        self.scenegen.validate()?;
        if let Some(&k) = self.data.unseen_classes.iter().find(|&&k| k >= self.model.n_classes) {
            return Err(TsdError::Config(format!("data.unseen_classes: class {k} out of range")));
        }
        if self.data.held_out().len() >= self.model.n_classes {
            return Err(TsdError::Config("data.unseen_classes covers every class".into()));
        }
        if self.signal.n_mels != self.model.encoder.n_mels {
            return Err(TsdError::Config(format!(
                "signal.n_mels {} differs from model.encoder.n_mels {}",
                self.signal.n_mels, self.model.encoder.n_mels
            )));
        }
        if self.signal.window < self.signal.hop || self.signal.hop == 0 {
            return Err(TsdError::Config("signal: need 0 < hop <= window".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) || !(self.eval.segment_s > 0.0) {
            return Err(TsdError::Config("eval: threshold in [0, 1] and segment_s > 0".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.model.encoder.clone(),
            fusion: self.fusion.clone(),
            n_classes: self.model.n_classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn grid(&self) -> FrameGrid {
        FrameGrid::new(self.signal, self.model.encoder.time_downsample())
    }
}
