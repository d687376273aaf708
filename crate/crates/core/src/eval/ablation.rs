use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Result, TsdError};
use crate::model::{FusionStrategy, ModelConfig};
use crate::train::{fit, FitContext, TrainConfig};

use super::evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderDesign {
    Unified,
    Dual,
}

impl EncoderDesign {
    pub const ALL: [EncoderDesign; 2] = [EncoderDesign::Unified, EncoderDesign::Dual];

    pub fn name(self) -> &'static str {
        match self {
            EncoderDesign::Unified => "unified",
            EncoderDesign::Dual => "dual",
        }
    }

    pub fn share_weights(self) -> bool {
        self == EncoderDesign::Unified
    }
}

impl FromStr for EncoderDesign {
    type Err = TsdError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| TsdError::InvalidArgument(format!("unknown encoder design `{s}` (unified, dual)")))
    }
}

impl fmt::Display for EncoderDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub fusion: FusionStrategy,
    pub encoder: EncoderDesign,
}

impl AblationVariant {
    pub fn label(&self) -> String {
        format!("{}_{}", self.fusion, self.encoder)
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        cfg.fusion.strategy = self.fusion;
        cfg.encoder.share_weights = self.encoder.share_weights();
        cfg
    }
}

/// Cartesian product, fusion-major.
pub fn ablation_grid(fusions: &[FusionStrategy], encoders: &[EncoderDesign]) -> Vec<AblationVariant> {
    fusions
        .iter()
        .flat_map(|&fusion| encoders.iter().map(move |&encoder| AblationVariant { fusion, encoder }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub backbone: String,
    pub fusion: FusionStrategy,
    pub encoder: EncoderDesign,
    pub segment_f1: f64,
    pub accuracy: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn backbone_name(cfg: &ModelConfig) -> String {
    let dims: Vec<String> = cfg.encoder.stage_dims.iter().map(|d| d.to_string()).collect();
    format!("convnext-{}", dims.join("-"))
}

impl AblationTable {
    pub fn row(&self, v: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.fusion == v.fusion && r.encoder == v.encoder)
    }

    /// Rows ranked by segment F1 (ties keep grid order).
    pub fn ranked(&self) -> Vec<&AblationRow> {
        let mut r: Vec<&AblationRow> = self.rows.iter().collect();
        r.sort_by(|a, b| b.segment_f1.total_cmp(&a.segment_f1));
        r
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<18}{:<17}{:<16}{:>12}{:>10}\n",
            "Backbone", "Fusion", "Encoder Design", "Segment-F1", "Accuracy"
        );
        for r in self.ranked() {
            let design = match r.encoder {
                EncoderDesign::Unified => "Unified",
                EncoderDesign::Dual => "Dual-branch",
            };
            out.push_str(&format!(
                "{:<18}{:<17}{:<16}{:>12.2}{:>10.2}\n",
                r.backbone,
                r.fusion.name(),
                design,
                100.0 * r.segment_f1,
                100.0 * r.accuracy
            ));
        }
        out
    }
}

/// Trains every variant with identical data and seed, selects on `val` and
/// scores the selected model on `test`. With a run directory each variant
/// gets its own subdirectory named by [`AblationVariant::label`].
pub fn run_ablation(
    train: &FeatureSet,
    val: &FeatureSet,
    test: &FeatureSet,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    ctx: &FitContext<'_>,
    variants: &[AblationVariant],
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = v.apply(base);
        let dir = ctx.run_dir.map(|d| d.join(v.label()));
        let vctx = FitContext {
            run_dir: dir.as_deref(),
            ..*ctx
        };
        log::info!("ablation variant {}", v.label());
        let out = fit(train, val, &cfg, train_cfg, &vctx)?;
        let report = evaluate(&out.best, test, &ctx.eval)?;
        if let Some(d) = &dir {
            report.write(&d.join("test"))?;
        }
        rows.push(AblationRow {
            backbone: backbone_name(&cfg),
            fusion: v.fusion,
            encoder: v.encoder,
            segment_f1: report.segment_f1,
            accuracy: report.accuracy,
            best_epoch: out.best_epoch,
        });
    }
    Ok(AblationTable { rows })
}
