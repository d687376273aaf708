//! Reference/mixture fusion.
//!
//! All strategies project the mixture frames to `F'` with a 1-D convolution
//! and finish with an average pool over groups of `pool_factor` adjacent
//! feature channels, so the output is `T x (F' / pool_factor)` and the time
//! axis is untouched.
//!
//! * `multiply`: the clip embedding is tiled over time, projected by its own
//!   1-D convolution and multiplied element-wise with the projected mixture.
//! * `film`: `gamma, beta in R^F'` come from linear maps of the clip embedding
//!   (initialized to `gamma = 1, beta = 0`) and modulate the projected mixture.
//! * `cross_attention`: projected mixture frames attend over projected
//!   reference frames; the attention output is added back residually.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Result, TsdError};
use crate::nn::{AttentionCache, Conv1d, Conv1dCache, Linear, Module, MultiHeadAttention, ParamView};

use super::config::{FusionConfig, FusionStrategy};

#[derive(Debug, Clone, PartialEq)]
pub enum Fusion {
    Multiply {
        proj_ref: Conv1d,
        proj_mix: Conv1d,
        pool: usize,
    },
    Film {
        proj_mix: Conv1d,
        gamma: Linear,
        beta: Linear,
        pool: usize,
    },
    CrossAttention {
        proj_ref: Conv1d,
        proj_mix: Conv1d,
        attention: MultiHeadAttention,
        pool: usize,
    },
}

pub enum FusionCache {
    Multiply {
        ref_cols: Conv1dCache,
        mix_cols: Conv1dCache,
        proj_ref: Array2<f64>,
        proj_mix: Array2<f64>,
    },
    Film {
        mix_cols: Conv1dCache,
        proj_mix: Array2<f64>,
        h_ref: Array2<f64>,
        gamma: Array1<f64>,
    },
    CrossAttention {
        ref_cols: Conv1dCache,
        mix_cols: Conv1dCache,
        proj_ref: Array2<f64>,
        proj_mix: Array2<f64>,
        attention: AttentionCache,
    },
}

impl FusionCache {
    /// Per-head attention weights, for the cross-attention variant.
    pub fn attention_weights(&self) -> Option<&[Array2<f64>]> {
        match self {
            Self::CrossAttention { attention, .. } => Some(&attention.weights),
            _ => None,
        }
    }
}

/// Gradients w.r.t. the three fusion inputs.
pub struct FusionGrads {
    pub h_ref: Array1<f64>,
    pub mix_frames: Array2<f64>,
    pub ref_frames: Option<Array2<f64>>,
}

/// Mean over groups of `factor` adjacent channels.
pub fn feature_pool(x: &Array2<f64>, factor: usize) -> Array2<f64> {
    let (t, c) = x.dim();
    let out_c = c / factor;
    let inv = 1.0 / factor as f64;
    Array2::from_shape_fn((t, out_c), |(i, j)| {
        x.row(i).slice(ndarray::s![j * factor..(j + 1) * factor]).sum() * inv
    })
}

fn feature_pool_backward(dz: ArrayView2<'_, f64>, factor: usize) -> Array2<f64> {
    let (t, out_c) = dz.dim();
    let inv = 1.0 / factor as f64;
    Array2::from_shape_fn((t, out_c * factor), |(i, j)| dz[[i, j / factor]] * inv)
}

impl Fusion {
    pub fn new<R: Rng>(cfg: &FusionConfig, feature_dim: usize, rng: &mut R) -> Self {
        let fp = cfg.projected_dim;
        let pool = cfg.pool_factor(feature_dim);
        let k = cfg.proj_kernel;
        match cfg.strategy {
            FusionStrategy::Multiply => Self::Multiply {
                proj_ref: Conv1d::new(k, feature_dim, fp, rng),
                proj_mix: Conv1d::new(k, feature_dim, fp, rng),
                pool,
            },
            FusionStrategy::Film => {
                let mut gamma = Linear::zeros(feature_dim, fp);
                gamma.bias.value.fill(1.0);
                Self::Film {
                    proj_mix: Conv1d::new(k, feature_dim, fp, rng),
                    gamma,
                    beta: Linear::zeros(feature_dim, fp),
                    pool,
                }
            }
            FusionStrategy::CrossAttention => Self::CrossAttention {
                proj_ref: Conv1d::new(k, feature_dim, fp, rng),
                proj_mix: Conv1d::new(k, feature_dim, fp, rng),
                attention: MultiHeadAttention::new(fp, cfg.attention_heads, rng),
                pool,
            },
        }
    }

    pub fn strategy(&self) -> FusionStrategy {
        match self {
            Self::Multiply { .. } => FusionStrategy::Multiply,
            Self::Film { .. } => FusionStrategy::Film,
            Self::CrossAttention { .. } => FusionStrategy::CrossAttention,
        }
    }

    fn proj_mix(&self) -> &Conv1d {
        match self {
            Self::Multiply { proj_mix, .. }
            | Self::Film { proj_mix, .. }
            | Self::CrossAttention { proj_mix, .. } => proj_mix,
        }
    }

    fn pool(&self) -> usize {
        match self {
            Self::Multiply { pool, .. } | Self::Film { pool, .. } | Self::CrossAttention { pool, .. } => *pool,
        }
    }

    /// Projected mixture frames with no conditioning applied, pooled. This is
    /// what every strategy reduces to when the reference has no effect.
    pub fn unconditioned(&self, mix_frames: ArrayView2<'_, f64>) -> Array2<f64> {
        let (p, _) = self.proj_mix().forward(mix_frames);
        feature_pool(&p, self.pool())
    }

    pub fn forward(
        &self,
        h_ref: ArrayView1<'_, f64>,
        mix_frames: ArrayView2<'_, f64>,
        ref_frames: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, FusionCache)> {
        let in_dim = self.proj_mix().in_ch;
        if mix_frames.ncols() != in_dim {
            return Err(TsdError::DimensionMismatch {
                stream: "mixture frames",
                expected: in_dim,
                got: mix_frames.ncols(),
            });
        }
        if h_ref.len() != in_dim {
            return Err(TsdError::DimensionMismatch {
                stream: "reference embedding",
                expected: in_dim,
                got: h_ref.len(),
            });
        }
        if ref_frames.ncols() != in_dim {
            return Err(TsdError::DimensionMismatch {
                stream: "reference frames",
                expected: in_dim,
                got: ref_frames.ncols(),
            });
        }
        let t = mix_frames.nrows();
        match self {
            Self::Multiply {
                proj_ref,
                proj_mix,
                pool,
            } => {
                let tiled = h_ref.broadcast((t, in_dim)).expect("tile reference").to_owned();
                let (pr, ref_cols) = proj_ref.forward(tiled.view());
                let (pm, mix_cols) = proj_mix.forward(mix_frames);
                let z = feature_pool(&(&pr * &pm), *pool);
                Ok((
                    z,
                    FusionCache::Multiply {
                        ref_cols,
                        mix_cols,
                        proj_ref: pr,
                        proj_mix: pm,
                    },
                ))
            }
            Self::Film {
                proj_mix,
                gamma,
                beta,
                pool,
            } => {
                let h = h_ref.insert_axis(Axis(0)).to_owned();
                let g = gamma.forward(h.view()).row(0).to_owned();
                let b = beta.forward(h.view()).row(0).to_owned();
                let (pm, mix_cols) = proj_mix.forward(mix_frames);
                let mut modulated = &pm * &g;
                modulated += &b;
                let z = feature_pool(&modulated, *pool);
                Ok((
                    z,
                    FusionCache::Film {
                        mix_cols,
                        proj_mix: pm,
                        h_ref: h,
                        gamma: g,
                    },
                ))
            }
            Self::CrossAttention {
                proj_ref,
                proj_mix,
                attention,
                pool,
            } => {
                let (pr, ref_cols) = proj_ref.forward(ref_frames);
                let (pm, mix_cols) = proj_mix.forward(mix_frames);
                let (att, acache) = attention.forward(pm.view(), pr.view());
                let z = feature_pool(&(&pm + &att), *pool);
                Ok((
                    z,
                    FusionCache::CrossAttention {
                        ref_cols,
                        mix_cols,
                        proj_ref: pr,
                        proj_mix: pm,
                        attention: acache,
                    },
                ))
            }
        }
    }

    pub fn backward(&mut self, cache: &FusionCache, dz: ArrayView2<'_, f64>) -> FusionGrads {
        let dp = feature_pool_backward(dz, self.pool());
        match (self, cache) {
            (
                Self::Multiply {
                    proj_ref, proj_mix, ..
                },
                FusionCache::Multiply {
                    ref_cols,
                    mix_cols,
                    proj_ref: pr,
                    proj_mix: pm,
                },
            ) => {
                let dpr = &dp * pm;
                let dpm = &dp * pr;
                let dtiled = proj_ref.backward(ref_cols, dpr.view());
                let dmix = proj_mix.backward(mix_cols, dpm.view());
                FusionGrads {
                    h_ref: dtiled.sum_axis(Axis(0)),
                    mix_frames: dmix,
                    ref_frames: None,
                }
            }
            (
                Self::Film {
                    proj_mix,
                    gamma,
                    beta,
                    ..
                },
                FusionCache::Film {
                    mix_cols,
                    proj_mix: pm,
                    h_ref,
                    gamma: g,
                },
            ) => {
                let dgamma = (&dp * pm).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dbeta = dp.sum_axis(Axis(0)).insert_axis(Axis(0));
                let dpm = &dp * g;
                let dmix = proj_mix.backward(mix_cols, dpm.view());
                let mut dh = gamma.backward(h_ref.view(), dgamma.view());
                dh += &beta.backward(h_ref.view(), dbeta.view());
                FusionGrads {
                    h_ref: dh.row(0).to_owned(),
                    mix_frames: dmix,
                    ref_frames: None,
                }
            }
            (
                Self::CrossAttention {
                    proj_ref,
                    proj_mix,
                    attention,
                    ..
                },
                FusionCache::CrossAttention {
                    ref_cols,
                    mix_cols,
                    proj_ref: pr,
                    proj_mix: pm,
                    attention: acache,
                },
            ) => {
                let (dq, dctx) = attention.backward(pm.view(), pr.view(), acache, dp.view());
                let dpm = &dp + &dq;
                let dmix = proj_mix.backward(mix_cols, dpm.view());
                let dref = proj_ref.backward(ref_cols, dctx.view());
                FusionGrads {
                    h_ref: Array1::zeros(dmix.ncols()),
                    mix_frames: dmix,
                    ref_frames: Some(dref),
                }
            }
            _ => panic!("fusion cache does not match fusion strategy"),
        }
    }
}

impl Module for Fusion {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        match self {
            Self::Multiply {
                proj_ref, proj_mix, ..
            } => {
                proj_ref.visit_params(&format!("{prefix}.proj_ref"), f);
                proj_mix.visit_params(&format!("{prefix}.proj_mix"), f);
            }
            Self::Film {
                proj_mix,
                gamma,
                beta,
                ..
            } => {
                proj_mix.visit_params(&format!("{prefix}.proj_mix"), f);
                gamma.visit_params(&format!("{prefix}.gamma"), f);
                beta.visit_params(&format!("{prefix}.beta"), f);
            }
            Self::CrossAttention {
                proj_ref,
                proj_mix,
                attention,
                ..
            } => {
                proj_ref.visit_params(&format!("{prefix}.proj_ref"), f);
                proj_mix.visit_params(&format!("{prefix}.proj_mix"), f);
                attention.visit_params(&format!("{prefix}.attention"), f);
            }
        }
    }
}
