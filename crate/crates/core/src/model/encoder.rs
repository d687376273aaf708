//! ConvNeXt-style encoder over log-mel spectrograms.
//!
//! The spectrogram is treated as a one-channel `time x mel` image:
//! patchify stem, stages of residual blocks
//! (depthwise conv -> layer norm -> pointwise x4 -> GELU -> pointwise -> add),
//! norm + patch convolution between stages, then a mean over the remaining
//! frequency bins and a final layer norm give `T x F` frame embeddings.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::error::{Result, TsdError};
use crate::nn::{gelu, gelu_grad, DepthwiseConv2d, LayerNorm, LayerNormCache, Linear, Module, PatchConv2d, ParamView};
use crate::signal::LogMel;

use super::config::EncoderConfig;

#[derive(Debug, Clone, PartialEq)]
struct Block {
    dw: DepthwiseConv2d,
    norm: LayerNorm,
    pw1: Linear,
    pw2: Linear,
}

struct BlockCache {
    input: Array3<f64>,
    norm: LayerNormCache,
    normed: Array2<f64>,
    hidden: Array2<f64>,
    activated: Array2<f64>,
}

impl Block {
    fn new<R: Rng>(dim: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            dw: DepthwiseConv2d::new(kernel, dim, rng),
            norm: LayerNorm::new(dim),
            pw1: Linear::new(dim, 4 * dim, rng),
            pw2: Linear::new(4 * dim, dim, rng),
        }
    }

    fn forward(&self, x: Array3<f64>) -> (Array3<f64>, BlockCache) {
        let dim = x.dim();
        let n = dim.0 * dim.1;
        let a = self.dw.forward(x.view());
        let a = a.into_shape_with_order((n, dim.2)).expect("block reshape");
        let (normed, norm) = self.norm.forward(a.view());
        let hidden = self.pw1.forward(normed.view());
        let activated = hidden.mapv(gelu);
        let e = self.pw2.forward(activated.view());
        let y = &x + &e.into_shape_with_order(dim).expect("block reshape");
        (
            y,
            BlockCache {
                input: x,
                norm,
                normed,
                hidden,
                activated,
            },
        )
    }

    fn backward(&mut self, cache: &BlockCache, dy: Array3<f64>) -> Array3<f64> {
        let dim = dy.dim();
        let n = dim.0 * dim.1;
        let de = dy.view().into_shape_with_order((n, dim.2)).expect("block reshape");
        let mut dact = self.pw2.backward(cache.activated.view(), de);
        dact.zip_mut_with(&cache.hidden, |g, &h| *g *= gelu_grad(h));
        let dnormed = self.pw1.backward(cache.normed.view(), dact.view());
        let da = self.norm.backward(&cache.norm, dnormed.view());
        let da = da.into_shape_with_order(dim).expect("block reshape");
        let dx = self.dw.backward(cache.input.view(), da.view());
        dy + dx
    }
}

impl Module for Block {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.dw.visit_params(&format!("{prefix}.dw"), f);
        self.norm.visit_params(&format!("{prefix}.norm"), f);
        self.pw1.visit_params(&format!("{prefix}.pw1"), f);
        self.pw2.visit_params(&format!("{prefix}.pw2"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Downsample {
    norm: LayerNorm,
    conv: PatchConv2d,
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    down: Option<Downsample>,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    cfg: EncoderConfig,
    stem: PatchConv2d,
    stem_norm: LayerNorm,
    stages: Vec<Stage>,
    head_norm: LayerNorm,
}

enum StageStep {
    Down {
        in_dim: (usize, usize, usize),
        norm: LayerNormCache,
        patches: Array2<f64>,
    },
    Block(BlockCache),
}

/// Everything the backward pass needs from one encoder forward.
pub struct EncoderCache {
    stem_patches: Array2<f64>,
    stem_dim: (usize, usize, usize),
    stem_norm: LayerNormCache,
    steps: Vec<Vec<StageStep>>,
    freq_bins: usize,
    head_norm: LayerNormCache,
}

impl Encoder {
    pub fn new<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let stem = PatchConv2d::new(cfg.stem_kernel, 1, cfg.stage_dims[0], rng);
        let stem_norm = LayerNorm::new(cfg.stage_dims[0]);
        let mut stages = Vec::with_capacity(cfg.stage_dims.len());
        for (s, (&dim, &depth)) in cfg.stage_dims.iter().zip(&cfg.stage_depths).enumerate() {
            let down = (s > 0).then(|| {
                let prev = cfg.stage_dims[s - 1];
                Downsample {
                    norm: LayerNorm::new(prev),
                    conv: PatchConv2d::new(cfg.downsample[s - 1], prev, dim, rng),
                }
            });
            let blocks = (0..depth).map(|_| Block::new(dim, cfg.dw_kernel, rng)).collect();
            stages.push(Stage { down, blocks });
        }
        Ok(Self {
            cfg: cfg.clone(),
            stem,
            stem_norm,
            stages,
            head_norm: LayerNorm::new(cfg.feature_dim()),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Number of encoder frames produced for `spec_frames` spectrogram frames.
    pub fn output_frames(&self, spec_frames: usize) -> usize {
        spec_frames.div_ceil(self.cfg.time_downsample())
    }

    fn prepare_input(&self, x: &LogMel) -> Result<Array3<f64>> {
        let d = self.cfg.time_downsample();
        let (t_spec, n_mels) = x.values.dim();
        if n_mels != self.cfg.n_mels {
            return Err(TsdError::DimensionMismatch {
                stream: "encoder input mel bins",
                expected: self.cfg.n_mels,
                got: n_mels,
            });
        }
        if t_spec < d {
            return Err(TsdError::ClipTooShort {
                frames: t_spec,
                factor: d,
            });
        }
        let t_pad = t_spec.div_ceil(d) * d;
        let (mu, sd) = (self.cfg.input_mean, self.cfg.input_std);
        let mut input = Array3::from_elem((t_pad, n_mels, 1), (LogMel::floor_value() - mu) / sd);
        input
            .slice_mut(ndarray::s![..t_spec, .., 0])
            .assign(&x.values.mapv(|v| (v - mu) / sd));
        Ok(input)
    }

    /// Frame embeddings `T x F` with `T = ceil(T_spec / D)`.
    pub fn forward(&self, x: &LogMel) -> Result<(Array2<f64>, EncoderCache)> {
        let input = self.prepare_input(x)?;
        let (h, stem_patches) = self.stem.forward(input.view());
        let stem_dim = h.dim();
        let flat = h.into_shape_with_order((stem_dim.0 * stem_dim.1, stem_dim.2)).expect("reshape");
        let (h, stem_norm) = self.stem_norm.forward(flat.view());
        let mut h = h.into_shape_with_order(stem_dim).expect("reshape");

        let mut steps = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let mut st = Vec::new();
            if let Some(down) = &stage.down {
                let in_dim = h.dim();
                let flat = h.into_shape_with_order((in_dim.0 * in_dim.1, in_dim.2)).expect("reshape");
                let (normed, norm) = down.norm.forward(flat.view());
                let normed = normed.into_shape_with_order(in_dim).expect("reshape");
                let (out, patches) = down.conv.forward(normed.view());
                st.push(StageStep::Down {
                    in_dim,
                    norm,
                    patches,
                });
                h = out;
            }
            for block in &stage.blocks {
                let (out, cache) = block.forward(h);
                st.push(StageStep::Block(cache));
                h = out;
            }
            steps.push(st);
        }

        let freq_bins = h.dim().1;
        let pooled = h.mean_axis(Axis(1)).expect("non-empty frequency axis");
        let (frames, head_norm) = self.head_norm.forward(pooled.view());
        Ok((
            frames,
            EncoderCache {
                stem_patches,
                stem_dim,
                stem_norm,
                steps,
                freq_bins,
                head_norm,
            },
        ))
    }

    /// Accumulates parameter gradients from `d_frames` (`T x F`).
    pub fn backward(&mut self, cache: &EncoderCache, d_frames: &Array2<f64>) {
        let dpooled = self.head_norm.backward(&cache.head_norm, d_frames.view());
        let (t, c) = dpooled.dim();
        let fb = cache.freq_bins;
        let scale = 1.0 / fb as f64;
        let mut dh = Array3::zeros((t, fb, c));
        for (mut plane, row) in dh.axis_iter_mut(Axis(0)).zip(dpooled.rows()) {
            for mut bin in plane.axis_iter_mut(Axis(0)) {
                bin.zip_mut_with(&row, |g, &v| *g = v * scale);
            }
        }

        for (stage, steps) in self.stages.iter_mut().zip(&cache.steps).rev() {
            let mut block_iter = stage.blocks.iter_mut().rev();
            for step in steps.iter().rev() {
                match step {
                    StageStep::Block(bc) => {
                        let block = block_iter.next().expect("block/cache alignment");
                        dh = block.backward(bc, dh);
                    }
                    StageStep::Down {
                        in_dim,
                        norm,
                        patches,
                    } => {
                        let down = stage.down.as_mut().expect("downsample/cache alignment");
                        let dnormed = down.conv.backward(patches, *in_dim, dh.view());
                        let flat = dnormed
                            .into_shape_with_order((in_dim.0 * in_dim.1, in_dim.2))
                            .expect("reshape");
                        let dflat = down.norm.backward(norm, flat.view());
                        dh = dflat.into_shape_with_order(*in_dim).expect("reshape");
                    }
                }
            }
        }

        let sd = cache.stem_dim;
        let flat = dh.into_shape_with_order((sd.0 * sd.1, sd.2)).expect("reshape");
        let dstem = self.stem_norm.backward(&cache.stem_norm, flat.view());
        let dstem = dstem.into_shape_with_order(sd).expect("reshape");
        self.stem.accumulate(&cache.stem_patches, dstem.view());
    }
}

impl Module for Encoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.stem.visit_params(&format!("{prefix}.stem"), f);
        self.stem_norm.visit_params(&format!("{prefix}.stem_norm"), f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            if let Some(down) = &mut stage.down {
                down.norm.visit_params(&format!("{prefix}.stage{s}.down_norm"), f);
                down.conv.visit_params(&format!("{prefix}.stage{s}.down"), f);
            }
            for (b, block) in stage.blocks.iter_mut().enumerate() {
                block.visit_params(&format!("{prefix}.stage{s}.block{b}"), f);
            }
        }
        self.head_norm.visit_params(&format!("{prefix}.head_norm"), f);
    }
}
