use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};

/// Log-mel level of the synthetic corpus at the default front-end.
pub const DEFAULT_INPUT_MEAN: f64 = 2.2;
pub const DEFAULT_INPUT_STD: f64 = 1.0;

/// Shape of the convolutional encoder.
///
/// The stem is a non-overlapping `stem_kernel = (time, freq)` patch
/// convolution; stage `s > 0` starts with a patch convolution of
/// `downsample[s - 1]`. The time downsampling factor is the product of all
/// time strides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub n_mels: usize,
    pub stem_kernel: (usize, usize),
    pub stage_dims: Vec<usize>,
    pub stage_depths: Vec<usize>,
    pub downsample: Vec<(usize, usize)>,
    pub dw_kernel: usize,
    /// `true`: one encoder for reference and mixture. `false`: the reference
    /// gets its own, independently initialized encoder.
    pub share_weights: bool,
    /// Log-mel inputs are standardized as `(x - input_mean) / input_std`
    /// before the stem.
    pub input_mean: f64,
    pub input_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_mels: 224,
            stem_kernel: (2, 8),
            stage_dims: vec![48, 96],
            stage_depths: vec![2, 2],
            downsample: vec![(2, 2)],
            dw_kernel: 7,
            share_weights: true,
            input_mean: DEFAULT_INPUT_MEAN,
            input_std: DEFAULT_INPUT_STD,
        }
    }
}

impl EncoderConfig {
    /// Full-scale widths (final width 768) with a time factor of 4.
    pub fn full_scale() -> Self {
        Self {
            n_mels: 224,
            stem_kernel: (2, 4),
            stage_dims: vec![96, 192, 384, 768],
            stage_depths: vec![3, 3, 9, 3],
            downsample: vec![(2, 2), (1, 2), (1, 2)],
            dw_kernel: 7,
            share_weights: true,
            ..Self::default()
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.stage_dims.last().expect("validated: at least one stage")
    }

    pub fn time_downsample(&self) -> usize {
        self.stem_kernel.0 * self.downsample.iter().map(|d| d.0).product::<usize>()
    }

    pub fn freq_downsample(&self) -> usize {
        self.stem_kernel.1 * self.downsample.iter().map(|d| d.1).product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TsdError::Config(format!("encoder: {m}")));
        if self.stage_dims.is_empty() || self.stage_dims.len() != self.stage_depths.len() {
            return bad("stage_dims and stage_depths must be non-empty and equal length".into());
        }
        if self.downsample.len() + 1 != self.stage_dims.len() {
            return bad("need one downsample entry between consecutive stages".into());
        }
        if self.stage_dims.contains(&0) {
            return bad("stage widths must be positive".into());
        }
        let kernels = std::iter::once(self.stem_kernel).chain(self.downsample.iter().copied());
        if kernels.into_iter().any(|(t, f)| t == 0 || f == 0) {
            return bad("strides must be positive".into());
        }
        if !self.input_mean.is_finite() || !(self.input_std > 0.0) {
            return bad("input_std must be positive and input_mean finite".into());
        }
        if self.dw_kernel % 2 == 0 {
            return bad("dw_kernel must be odd".into());
        }
        if self.n_mels == 0 || self.n_mels % self.freq_downsample() != 0 {
            return bad(format!(
                "n_mels {} not divisible by total frequency stride {}",
                self.n_mels,
                self.freq_downsample()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Multiply,
    Film,
    CrossAttention,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [Self::Multiply, Self::Film, Self::CrossAttention];

    pub fn name(self) -> &'static str {
        match self {
            Self::Multiply => "multiply",
            Self::Film => "film",
            Self::CrossAttention => "cross_attention",
        }
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = TsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiply" => Ok(Self::Multiply),
            "film" => Ok(Self::Film),
            "cross_attention" => Ok(Self::CrossAttention),
            other => Err(TsdError::Config(format!("unknown fusion strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub projected_dim: usize,
    pub attention_heads: usize,
    /// Kernel width of the two 1-D projection convolutions.
    pub proj_kernel: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            strategy: FusionStrategy::Multiply,
            projected_dim: 384,
            attention_heads: 4,
            proj_kernel: 1,
        }
    }
}

impl FusionConfig {
    pub fn full_scale() -> Self {
        Self {
            projected_dim: 3072,
            attention_heads: 8,
            ..Self::default()
        }
    }

    pub fn pool_factor(&self, feature_dim: usize) -> usize {
        self.projected_dim / feature_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            fusion: FusionConfig::default(),
            n_classes: 10,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        Self {
            encoder: EncoderConfig::full_scale(),
            fusion: FusionConfig::full_scale(),
            n_classes: 10,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let f = self.feature_dim();
        let fp = self.fusion.projected_dim;
        if fp == 0 || fp % f != 0 {
            return Err(TsdError::Config(format!(
                "fusion: projected_dim {fp} must be a positive multiple of feature_dim {f}"
            )));
        }
        if f % 2 != 0 {
            return Err(TsdError::Config(format!(
                "feature_dim {f} must be even (split across two GRU directions)"
            )));
        }
        if self.fusion.strategy == FusionStrategy::CrossAttention
            && (self.fusion.attention_heads == 0 || fp % self.fusion.attention_heads != 0)
        {
            return Err(TsdError::Config(format!(
                "fusion: projected_dim {fp} not divisible by {} heads",
                self.fusion.attention_heads
            )));
        }
        if self.fusion.proj_kernel % 2 == 0 {
            return Err(TsdError::Config("fusion: proj_kernel must be odd".into()));
        }
        if self.n_classes < 2 {
            return Err(TsdError::Config("need at least two classes".into()));
        }
        Ok(())
    }
}
