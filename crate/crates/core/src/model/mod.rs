//! The detector: a shared encoder for mixture and reference, a fusion stage,
//! a bidirectional GRU, a per-frame detection head and a clip-level tag head.

mod checkpoint;
mod config;
mod encoder;
mod fusion;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TsdError};
use crate::nn::{gelu, gelu_grad, sigmoid, BiGru, BiGruCache, Linear, Module, ParamView};
use crate::signal::LogMel;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, StoredTensor, CHECKPOINT_VERSION};
pub use config::{EncoderConfig, FusionConfig, FusionStrategy, ModelConfig, DEFAULT_INPUT_MEAN, DEFAULT_INPUT_STD};
pub use encoder::{Encoder, EncoderCache};
pub use fusion::{feature_pool, Fusion, FusionCache, FusionGrads};

/// Which encoder path a clip goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Mixture,
    Reference,
}

/// `T x F` encoder output with its frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddings {
    pub values: Array2<f64>,
    pub frame_hop_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipEmbedding {
    pub values: Array1<f64>,
}

impl ClipEmbedding {
    /// Temporal mean of frame embeddings.
    pub fn from_frames(frames: ArrayView2<'_, f64>) -> Self {
        Self {
            values: frames.mean_axis(Axis(0)).expect("at least one frame"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DetectionOutput {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = logits.iter().map(|&o| sigmoid(o)).collect();
        Self { logits, probs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagOutput {
    pub logits: Vec<f64>,
}

impl TagOutput {
    pub fn softmax(&self) -> Vec<f64> {
        let m = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.logits.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn predicted_class(&self) -> usize {
        self.logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0
    }
}

/// Two linear layers with a GELU in between; softmax lives in the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TagHead {
    fn forward(&self, h: ArrayView1<'_, f64>) -> (TagOutput, Array2<f64>, Array2<f64>) {
        let x = h.insert_axis(Axis(0)).to_owned();
        let hidden = self.fc1.forward(x.view());
        let act = hidden.mapv(gelu);
        let z = self.fc2.forward(act.view());
        (
            TagOutput {
                logits: z.row(0).to_vec(),
            },
            hidden,
            act,
        )
    }
}

pub struct ForwardCache {
    mix: EncoderCache,
    reference: EncoderCache,
    head: HeadCache,
}

impl ForwardCache {
    pub fn fusion(&self) -> &FusionCache {
        &self.head.fusion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutput {
    pub detection: DetectionOutput,
    pub tag: TagOutput,
    pub frame_hop_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsdModel {
    cfg: ModelConfig,
    encoder: Encoder,
    /// Present only for the dual-branch design.
    ref_encoder: Option<Encoder>,
    fusion: Fusion,
    temporal: BiGru,
    detect: Linear,
    tag: TagHead,
}

impl TsdModel {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = cfg.feature_dim();
        let encoder = Encoder::new(&cfg.encoder, &mut rng)?;
        let ref_encoder = if cfg.encoder.share_weights {
            None
        } else {
            Some(Encoder::new(&cfg.encoder, &mut rng)?)
        };
        let fusion = Fusion::new(&cfg.fusion, f, &mut rng);
        let temporal = BiGru::new(f, f / 2, &mut rng);
        let detect = Linear::new(f, 1, &mut rng);
        let tag = TagHead {
            fc1: Linear::new(f, f, &mut rng),
            fc2: Linear::new(f, cfg.n_classes, &mut rng),
        };
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            ref_encoder,
            fusion,
            temporal,
            detect,
            tag,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn fusion_layer(&self) -> &Fusion {
        &self.fusion
    }

    pub fn fusion_layer_mut(&mut self) -> &mut Fusion {
        &mut self.fusion
    }

    pub fn temporal_layer_mut(&mut self) -> &mut BiGru {
        &mut self.temporal
    }

    pub fn detect_layer_mut(&mut self) -> &mut Linear {
        &mut self.detect
    }

    pub fn tag_layer_mut(&mut self) -> &mut TagHead {
        &mut self.tag
    }

    fn encoder_for(&self, branch: Branch) -> &Encoder {
        match (branch, &self.ref_encoder) {
            (Branch::Reference, Some(e)) => e,
            _ => &self.encoder,
        }
    }

    pub fn output_frames(&self, spec_frames: usize) -> usize {
        self.encoder.output_frames(spec_frames)
    }

    pub fn encode_frames(&self, x: &LogMel, branch: Branch) -> Result<FrameEmbeddings> {
        let (values, _) = self.encoder_for(branch).forward(x)?;
        Ok(FrameEmbeddings {
            values,
            frame_hop_s: x.frame_hop_s * self.cfg.encoder.time_downsample() as f64,
        })
    }

    pub fn encode_clip(&self, x: &LogMel) -> Result<ClipEmbedding> {
        let frames = self.encode_frames(x, Branch::Reference)?;
        Ok(ClipEmbedding::from_frames(frames.values.view()))
    }

    pub fn fuse(
        &self,
        h_ref: &ClipEmbedding,
        mix: &FrameEmbeddings,
        ref_frames: &FrameEmbeddings,
    ) -> Result<Array2<f64>> {
        Ok(self
            .fusion
            .forward(h_ref.values.view(), mix.values.view(), ref_frames.values.view())?
            .0)
    }

    pub fn temporal_model(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        self.temporal.forward(z).0
    }

    pub fn detect_head(&self, h: ArrayView2<'_, f64>) -> DetectionOutput {
        DetectionOutput::from_logits(self.detect.forward(h).column(0).to_vec())
    }

    pub fn tag_head(&self, h_ref: &ClipEmbedding) -> TagOutput {
        self.tag.forward(h_ref.values.view()).0
    }

    /// Forward pass from already-encoded streams, used by [`forward`] and by
    /// tests that drive the fusion stack directly.
    pub fn forward_from_embeddings(
        &self,
        mix_frames: ArrayView2<'_, f64>,
        ref_frames: ArrayView2<'_, f64>,
    ) -> Result<(DetectionOutput, TagOutput, HeadCache)> {
        let h_ref = ref_frames.mean_axis(Axis(0)).ok_or_else(|| {
            TsdError::InvalidArgument("reference has no frames".into())
        })?;
        let (fused, fusion) = self.fusion.forward(h_ref.view(), mix_frames, ref_frames)?;
        let (gru_out, gru) = self.temporal.forward(fused.view());
        let det = self.detect_head(gru_out.view());
        let (tag, tag_hidden, tag_act) = self.tag.forward(h_ref.view());
        Ok((
            det,
            tag,
            HeadCache {
                ref_frames: ref_frames.to_owned(),
                h_ref,
                fusion,
                fused,
                gru,
                gru_out,
                tag_hidden,
                tag_act,
            },
        ))
    }

    /// Gradients of everything after the encoder. Returns
    /// `(d mixture frames, d reference frames)`.
    pub fn backward_from_embeddings(
        &mut self,
        cache: &HeadCache,
        d_logits: &[f64],
        d_tag: &[f64],
    ) -> (Array2<f64>, Array2<f64>) {
        let t = cache.gru_out.nrows();
        let dlog = Array2::from_shape_vec((t, 1), d_logits.to_vec()).expect("one logit per frame");
        let dgru = self.detect.backward(cache.gru_out.view(), dlog.view());
        let dfused = self.temporal.backward(cache.fused.view(), &cache.gru, dgru.view());
        let grads = self.fusion.backward(&cache.fusion, dfused.view());

        let dz = Array2::from_shape_vec((1, d_tag.len()), d_tag.to_vec()).expect("tag gradient");
        let mut dact = self.tag.fc2.backward(cache.tag_act.view(), dz.view());
        dact.zip_mut_with(&cache.tag_hidden, |g, &h| *g *= gelu_grad(h));
        let h_row = cache.h_ref.view().insert_axis(Axis(0));
        let dh_tag = self.tag.fc1.backward(h_row, dact.view());

        let mut dh_ref = grads.h_ref;
        dh_ref += &dh_tag.row(0);
        let s = cache.ref_frames.nrows();
        let mut dref = grads
            .ref_frames
            .unwrap_or_else(|| Array2::zeros(cache.ref_frames.raw_dim()));
        let share = &dh_ref / s as f64;
        for mut row in dref.rows_mut() {
            row += &share;
        }
        (grads.mix_frames, dref)
    }

    pub fn forward(&self, mixture: &LogMel, reference: &LogMel) -> Result<(PairOutput, ForwardCache)> {
        let (mix_frames, mix) = self.encoder.forward(mixture)?;
        let (ref_frames, reference_cache) = self.encoder_for(Branch::Reference).forward(reference)?;
        let (detection, tag, head) = self.forward_from_embeddings(mix_frames.view(), ref_frames.view())?;
        Ok((
            PairOutput {
                detection,
                tag,
                frame_hop_s: mixture.frame_hop_s * self.cfg.encoder.time_downsample() as f64,
            },
            ForwardCache {
                mix,
                reference: reference_cache,
                head,
            },
        ))
    }

    pub fn predict(&self, mixture: &LogMel, reference: &LogMel) -> Result<PairOutput> {
        Ok(self.forward(mixture, reference)?.0)
    }

    /// Accumulates parameter gradients given `dL/d detection logits` and
    /// `dL/d tag logits`.
    pub fn backward(&mut self, cache: ForwardCache, d_logits: &[f64], d_tag: &[f64]) {
        let ForwardCache { mix, reference, head } = cache;
        let (dmix, dref) = self.backward_from_embeddings(&head, d_logits, d_tag);
        self.encoder.backward(&mix, &dmix);
        match &mut self.ref_encoder {
            Some(e) => e.backward(&reference, &dref),
            None => self.encoder.backward(&reference, &dref),
        }
    }
}

/// Cache for the post-encoder part of the forward pass.
pub struct HeadCache {
    ref_frames: Array2<f64>,
    h_ref: Array1<f64>,
    fusion: FusionCache,
    fused: Array2<f64>,
    gru: BiGruCache,
    gru_out: Array2<f64>,
    tag_hidden: Array2<f64>,
    tag_act: Array2<f64>,
}

impl HeadCache {
    pub fn fusion(&self) -> &FusionCache {
        &self.fusion
    }
}

impl Module for TsdModel {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        let p = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        self.encoder.visit_params(&p("encoder"), f);
        if let Some(e) = &mut self.ref_encoder {
            e.visit_params(&p("ref_encoder"), f);
        }
        self.fusion.visit_params(&p("fusion"), f);
        self.temporal.visit_params(&p("temporal"), f);
        self.detect.visit_params(&p("detect"), f);
        self.tag.fc1.visit_params(&p("tag.fc1"), f);
        self.tag.fc2.visit_params(&p("tag.fc2"), f);
    }
}
