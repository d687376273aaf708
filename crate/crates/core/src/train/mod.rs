//! Training: augmentation, AdamW, plateau schedule and the epoch loop.
//!
//! A run directory written by [`fit`] holds:
//!
//! ```text
//! metrics.jsonl     one EpochRecord per line
//! best.ckpt.json    best validation segment F1 so far
//! last.ckpt.json    parameters after the final epoch
//! nan_batch.json    only when a non-finite loss aborted the run
//! ```
//!
//! The caller adds `config.toml` (see [`crate::config`]).

mod augment;
mod optim;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Result, TsdError};
use crate::eval::{evaluate, EvalConfig};
use crate::loss::{clip_ce_with_grad, frame_bce_with_grad, total_loss, LossBreakdown};
use crate::model::{save_checkpoint, ModelConfig, TsdModel};
use crate::nn::Module;
use crate::scenegen::{derive_seed, DatasetManifest};
use crate::signal::FrontendConfig;

pub use augment::{augment, augment_with_shift, freq_mask, roll_frames, roll_vec, time_mask, AugmentConfig};
pub use optim::{AdamW, PlateauScheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub augment: AugmentConfig,
    /// Set from the run seed; not part of the config document.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            weight_decay: 0.01,
            scheduler_factor: 0.1,
            scheduler_patience: 3,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TsdError::Config(format!("train: {m}")));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay nonnegative");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return bad("scheduler_factor must lie in (0, 1)");
        }
        if self.scheduler_patience == 0 {
            return bad("scheduler_patience must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ce: f64,
    pub l_sed: f64,
    pub l_total: f64,
    pub val_f1: f64,
    pub val_accuracy: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// What [`fit`] needs besides data and hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct FitContext<'a> {
    pub frontend: FrontendConfig,
    pub eval: EvalConfig,
    pub run_dir: Option<&'a Path>,
}

pub struct FitOutcome {
    /// Parameters with the best validation segment F1.
    pub best: TsdModel,
    pub last: TsdModel,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochRecord>,
}

/// Removes training pairs that target a held-out class. The test manifest is
/// returned unchanged.
pub fn unseen_class_split(
    train: &DatasetManifest,
    test: &DatasetManifest,
    held_out: &BTreeSet<usize>,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let c = train.class_names.len();
    if let Some(&bad) = held_out.iter().find(|&&k| k >= c) {
        return Err(TsdError::InvalidArgument(format!("held-out class {bad} of {c}")));
    }
    if held_out.len() >= c {
        return Err(TsdError::InvalidArgument("held-out classes cover every class".into()));
    }
    let mut kept = train.clone();
    kept.pairs.retain(|p| !held_out.contains(&p.target_class));
    Ok((kept, test.clone()))
}

/// Forward and backward for one pair; gradients are scaled by `scale`.
fn train_pair(
    model: &mut TsdModel,
    set: &FeatureSet,
    idx: usize,
    cfg: &TrainConfig,
    seed: u64,
    scale: f64,
) -> Result<LossBreakdown> {
    let ex = &set.examples[idx];
    let d = model.config().encoder.time_downsample() as f64;
    let (mix, shift) = augment_with_shift(set.mixture(ex), &cfg.augment, seed);
    let reference = if cfg.augment.augment_reference {
        augment(set.reference(ex), &cfg.augment, seed ^ 0x2ef)
    } else {
        set.reference(ex).clone()
    };
    let targets = roll_vec(&ex.targets, (shift as f64 / d).round() as isize);
    let (out, cache) = model.forward(&mix, &reference)?;
    let (l_sed, mut d_logits) = frame_bce_with_grad(&out.detection.logits, &targets)?;
    let (l_ce, mut d_tag) = clip_ce_with_grad(&out.tag.logits, ex.target_class);
    d_logits.iter_mut().for_each(|g| *g *= scale);
    d_tag.iter_mut().for_each(|g| *g *= scale);
    let losses = total_loss(l_ce, l_sed);
    if losses.l_total.is_finite() {
        model.backward(cache, &d_logits, &d_tag);
    }
    Ok(losses)
}

fn dump_nan_batch(run_dir: Option<&Path>, epoch: usize, ids: &[String]) {
    if let Some(dir) = run_dir {
        let body = serde_json::json!({ "epoch": epoch, "pair_ids": ids });
        if let Err(e) = crate::io::write_atomic(&dir.join("nan_batch.json"), body.to_string().as_bytes()) {
            log::error!("could not write nan_batch.json: {e}");
        }
    }
}

/// Trains from a fresh model seeded by `cfg.seed`. Validation segment F1 at
/// `ctx.eval` drives both the plateau schedule and best-model selection.
pub fn fit(
    train: &FeatureSet,
    val: &FeatureSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    ctx: &FitContext<'_>,
) -> Result<FitOutcome> {
    let model = TsdModel::new(model_cfg, derive_seed(cfg.seed, &[0x30de1]))?;
    fit_from(model, train, val, cfg, ctx)
}

/// Like [`fit`] but starts from the given parameters.
pub fn fit_from(
    mut model: TsdModel,
    train: &FeatureSet,
    val: &FeatureSet,
    cfg: &TrainConfig,
    ctx: &FitContext<'_>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TsdError::EmptyDataset);
    }
    if train.class_names != val.class_names || train.n_classes() != model.config().n_classes {
        return Err(TsdError::ClassListMismatch);
    }
    if let Some(dir) = ctx.run_dir {
        std::fs::create_dir_all(dir)?;
        crate::io::write_atomic(&dir.join("metrics.jsonl"), b"")?;
    }
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut best: Option<(TsdModel, usize, f64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64, 0x5f])));
        let mut sum = LossBreakdown::zero();
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = LossBreakdown::zero();
            for &i in batch {
                let s = derive_seed(cfg.seed, &[epoch as u64, i as u64, 0xa6]);
                batch_loss.accumulate(&train_pair(&mut model, train, i, cfg, s, scale)?);
            }
            if !batch_loss.l_total.is_finite() {
                let ids: Vec<String> = batch.iter().map(|&i| train.examples[i].pair_id.clone()).collect();
                dump_nan_batch(ctx.run_dir, epoch, &ids);
                return Err(TsdError::NonFiniteLoss { epoch, pair_ids: ids });
            }
            opt.step(&mut model);
            sum.accumulate(&batch_loss);
        }
        let mean = sum.scaled(1.0 / train.len() as f64);
        let report = evaluate(&model, val, &ctx.eval)?;
        let lr = opt.lr();
        let rec = EpochRecord {
            epoch,
            l_ce: mean.l_ce,
            l_sed: mean.l_sed,
            l_total: mean.l_total,
            val_f1: report.segment_f1,
            val_accuracy: report.accuracy,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: l_ce {:.4} l_sed {:.4} l_total {:.4} val F1 {:.4} acc {:.4} lr {lr:.2e} ({:.1}s)",
            rec.l_ce,
            rec.l_sed,
            rec.l_total,
            rec.val_f1,
            rec.val_accuracy,
            rec.seconds
        );
        if best.as_ref().map_or(true, |b| rec.val_f1 > b.2) {
            best = Some((model.clone(), epoch, rec.val_f1));
            if let Some(dir) = ctx.run_dir {
                save_checkpoint(dir.join("best.ckpt.json"), &mut model, ctx.frontend, &train.class_names)?;
            }
        }
        if let Some(dir) = ctx.run_dir {
            crate::io::append_jsonl(&dir.join("metrics.jsonl"), &rec)?;
        }
        opt.set_lr(sched.observe(rec.val_f1, lr));
        history.push(rec);
    }

    if let Some(dir) = ctx.run_dir {
        save_checkpoint(dir.join("last.ckpt.json"), &mut model, ctx.frontend, &train.class_names)?;
    }
    let (best, best_epoch, best_val_f1) = best.expect("at least one epoch");
    Ok(FitOutcome {
        best,
        last: model,
        best_epoch,
        best_val_f1,
        history,
    })
}
