//! HTK mel filterbank.
//!
//! `mel(f) = 2595 * log10(1 + f / 700)` and `hz(m) = 700 * (10^(m / 2595) - 1)`.
//! For `n_mels` filters, `n_mels + 2` points are spaced uniformly on the mel
//! axis between `mel(0)` and `mel(sr / 2)`; filter `k` is the triangle rising
//! from point `k` to a peak of 1.0 at point `k + 1` and falling back to zero at
//! point `k + 2`. Weights are evaluated at the FFT bin frequencies
//! `j * sr / n_fft` without area normalization.

use ndarray::Array2;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`
    weights: Array2<f64>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn htk(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let points: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = |j: usize| j as f64 * sample_rate as f64 / n_fft as f64;
        let mut weights = Array2::zeros((n_mels, n_bins));
        for k in 0..n_mels {
            let (lo, mid, hi) = (points[k], points[k + 1], points[k + 2]);
            for j in 0..n_bins {
                let f = bin_hz(j);
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                weights[[k, j]] = w;
            }
        }
        Self {
            weights,
            centers_hz: points[1..=n_mels].to_vec(),
        }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Projects a `frames x bins` power spectrogram to `frames x n_mels`.
    pub fn apply(&self, power: &Array2<f64>) -> Array2<f64> {
        power.dot(&self.weights.t())
    }
}
