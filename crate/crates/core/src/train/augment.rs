use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::signal::LogMel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub freq_mask_max_bins: usize,
    pub time_mask_max_frames: usize,
    pub max_shift_frames: usize,
    /// Also augment the reference clip (the mixture is always augmented).
    pub augment_reference: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            freq_mask_max_bins: 16,
            time_mask_max_frames: 24,
            max_shift_frames: 16,
            augment_reference: false,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            freq_mask_max_bins: 0,
            time_mask_max_frames: 0,
            max_shift_frames: 0,
            augment_reference: false,
        }
    }

    pub fn is_noop(&self) -> bool {
        self.freq_mask_max_bins == 0 && self.time_mask_max_frames == 0 && self.max_shift_frames == 0
    }
}

/// Sets mel bins `start..start + width` of every frame to the floor value.
pub fn freq_mask(x: &mut LogMel, start: usize, width: usize) {
    let end = (start + width).min(x.n_mels());
    x.values
        .slice_mut(ndarray::s![.., start.min(end)..end])
        .fill(LogMel::floor_value());
}

/// Sets frames `start..start + width` to the floor value.
pub fn time_mask(x: &mut LogMel, start: usize, width: usize) {
    let end = (start + width).min(x.n_frames());
    x.values
        .slice_mut(ndarray::s![start.min(end)..end, ..])
        .fill(LogMel::floor_value());
}

/// Circular shift along time: frame `t` moves to `(t + shift) mod T`.
pub fn roll_frames(x: &LogMel, shift: isize) -> LogMel {
    let t = x.n_frames();
    let mut out = x.clone();
    if t == 0 {
        return out;
    }
    for (i, row) in x.values.rows().into_iter().enumerate() {
        let j = (i as isize + shift).rem_euclid(t as isize) as usize;
        out.values.row_mut(j).assign(&row);
    }
    out
}

/// Circular shift of a per-frame vector, same convention as [`roll_frames`].
pub fn roll_vec<T: Copy>(v: &[T], shift: isize) -> Vec<T> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = v.to_vec();
    for (i, &x) in v.iter().enumerate() {
        out[(i as isize + shift).rem_euclid(n as isize) as usize] = x;
    }
    out
}

fn draw_mask(rng: &mut ChaCha8Rng, max: usize, dim: usize) -> (usize, usize) {
    let max = max.min(dim.saturating_sub(1));
    if max == 0 {
        return (0, 0);
    }
    let w = rng.gen_range(0..=max);
    (rng.gen_range(0..=dim - w), w)
}

/// Frequency mask, time mask, then circular shift, all drawn from `seed`.
/// Returns the augmented copy and the applied shift in spectrogram frames.
pub fn augment_with_shift(x: &LogMel, cfg: &AugmentConfig, seed: u64) -> (LogMel, isize) {
    if cfg.is_noop() {
        return (x.clone(), 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    let (fs, fw) = draw_mask(&mut rng, cfg.freq_mask_max_bins, x.n_mels());
    freq_mask(&mut out, fs, fw);
    let (ts, tw) = draw_mask(&mut rng, cfg.time_mask_max_frames, x.n_frames());
    time_mask(&mut out, ts, tw);
    let m = cfg.max_shift_frames.min(x.n_frames().saturating_sub(1)) as isize;
    let shift = if m > 0 { rng.gen_range(-m..=m) } else { 0 };
    (roll_frames(&out, shift), shift)
}

pub fn augment(x: &LogMel, cfg: &AugmentConfig, seed: u64) -> LogMel {
    augment_with_shift(x, cfg, seed).0
}
