//! Multi-task objective: clip-level cross-entropy on the tag logits plus
//! frame-level binary cross-entropy on the detection logits, summed 1:1.
//!
//! Both terms are summed within a clip (over classes and over frames). The
//! training loop averages clip losses over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_sed: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn zero() -> Self {
        Self {
            l_ce: 0.0,
            l_sed: 0.0,
            l_total: 0.0,
        }
    }

    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.l_ce += other.l_ce;
        self.l_sed += other.l_sed;
        self.l_total += other.l_total;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            l_ce: self.l_ce * s,
            l_sed: self.l_sed * s,
            l_total: self.l_total * s,
        }
    }
}

pub fn total_loss(l_ce: f64, l_sed: f64) -> LossBreakdown {
    LossBreakdown {
        l_ce,
        l_sed,
        l_total: l_ce + l_sed,
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn class_of(one_hot: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in one_hot.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(TsdError::NotOneHot);
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(TsdError::NotOneHot);
        }
    }
    hot.ok_or(TsdError::NotOneHot)
}

/// `-sum_c y_c log softmax(z)_c` for a one-hot `y`.
pub fn clip_ce(logits: &[f64], one_hot: &[f64]) -> Result<f64> {
    if logits.len() != one_hot.len() {
        return Err(TsdError::LengthMismatch {
            left: logits.len(),
            right: one_hot.len(),
        });
    }
    let c = class_of(one_hot)?;
    Ok(clip_ce_with_grad(logits, c).0)
}

/// Loss and `dL/dz = softmax(z) - y` for target class `class`.
pub fn clip_ce_with_grad(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let loss = (lse - logits[class]).max(0.0);
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    grad[class] -= 1.0;
    (loss, grad)
}

/// `max(o, 0) - p o + ln(1 + e^{-|o|})`, the logit-space form of
/// `-(p ln sigmoid(o) + (1 - p) ln(1 - sigmoid(o)))`.
fn bce_term(o: f64, p: f64) -> f64 {
    o.max(0.0) - p * o + (-o.abs()).exp().ln_1p()
}

/// Summed binary cross-entropy over frames, from detection logits.
pub fn frame_bce(logits: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(frame_bce_with_grad(logits, targets)?.0)
}

/// Loss and `dL/do_i = sigmoid(o_i) - p_i`.
pub fn frame_bce_with_grad(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(TsdError::LengthMismatch {
            left: logits.len(),
            right: targets.len(),
        });
    }
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&o, &p)| {
            loss += bce_term(o, p);
            crate::nn::sigmoid(o) - p
        })
        .collect();
    Ok((loss, grad))
}

/// Probability-domain variant; probabilities are clamped to `[eps, 1 - eps]`
/// and mapped back to logits.
pub fn frame_bce_from_probs(probs: &[f64], targets: &[f64]) -> Result<f64> {
    const EPS: f64 = 1e-12;
    let logits: Vec<f64> = probs
        .iter()
        .map(|&p| {
            let p = p.clamp(EPS, 1.0 - EPS);
            (p / (1.0 - p)).ln()
        })
        .collect();
    frame_bce(&logits, targets)
}
