//! Audio front-end: waveforms, band-limited resampling, STFT and log-mel
//! features.
//!
//! Conventions used throughout the crate:
//!
//! * Frames are centered: the signal is reflect-padded by `window / 2` on both
//!   sides, so spectrogram frame `t` is centered on sample `t * hop` and the
//!   frame count is `1 + floor(len / hop)`.
//! * The analysis window is a periodic Hann window of length `window`; the FFT
//!   size equals the window length.
//! * Mel filters follow the HTK mel scale, see [`mel`].
//! * Log-mel values are `ln(mel_power + ENERGY_FLOOR)` with power `|X|^2`.

pub mod mel;
mod resample;
mod wav;

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};

pub use mel::MelFilterbank;
pub use resample::resample;
pub use wav::{read_wav, wav_duration, write_wav};

/// Sample rate every clip is converted to before feature extraction.
pub const TARGET_SAMPLE_RATE: u32 = 32_000;

/// Additive guard applied to mel power before the logarithm.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(TsdError::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(TsdError::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// STFT/mel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: TARGET_SAMPLE_RATE,
            window: 1024,
            hop: 320,
            n_mels: 224,
        }
    }
}

impl FrontendConfig {
    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Spectrogram frame count for a clip of `len` samples.
    pub fn spec_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }
}

/// Log-mel spectrogram, `values` is `frames x n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMel {
    pub values: Array2<f64>,
    pub frame_hop_s: f64,
    pub source_sr: u32,
}

impl LogMel {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }

    pub fn floor_value() -> f64 {
        ENERGY_FLOOR.ln()
    }
}

/// Reusable STFT + mel projection for one [`FrontendConfig`].
pub struct LogMelExtractor {
    cfg: FrontendConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
}

impl std::fmt::Debug for LogMelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelExtractor").field("cfg", &self.cfg).finish()
    }
}

impl LogMelExtractor {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        if cfg.hop == 0 || cfg.window < cfg.hop || cfg.n_mels == 0 || cfg.sample_rate == 0 {
            return Err(TsdError::InvalidArgument(format!(
                "invalid front-end parameters {cfg:?} (need window >= hop > 0, n_mels > 0)"
            )));
        }
        let window = periodic_hann(cfg.window);
        let fft = FftPlanner::new().plan_fft_forward(cfg.window);
        let filterbank = MelFilterbank::htk(cfg.n_mels, cfg.window, cfg.sample_rate);
        Ok(Self {
            cfg,
            window,
            fft,
            filterbank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Power spectrogram `frames x (window/2 + 1)`.
    pub fn power_spectrogram(&self, w: &Waveform) -> Result<Array2<f64>> {
        let x = w.samples();
        if x.is_empty() {
            return Err(TsdError::EmptyWaveform);
        }
        if x.len() < self.cfg.hop {
            return Err(TsdError::TooShort {
                samples: x.len(),
                hop: self.cfg.hop,
            });
        }
        let n_fft = self.cfg.window;
        let pad = n_fft / 2;
        let padded = reflect_pad(x, pad);
        let n_frames = self.cfg.spec_frames(x.len());
        let n_bins = n_fft / 2 + 1;
        let mut out = Array2::zeros((n_frames, n_bins));
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = t * self.cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(padded[start + i] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = buf[k].norm_sqr();
            }
        }
        Ok(out)
    }

    pub fn compute(&self, w: &Waveform) -> Result<LogMel> {
        if w.sample_rate() != self.cfg.sample_rate {
            return Err(TsdError::InvalidArgument(format!(
                "waveform at {} Hz, front-end expects {} Hz; resample first",
                w.sample_rate(),
                self.cfg.sample_rate
            )));
        }
        let power = self.power_spectrogram(w)?;
        let mut values = self.filterbank.apply(&power);
        values.mapv_inplace(|p| (p + ENERGY_FLOOR).ln());
        Ok(LogMel {
            values,
            frame_hop_s: self.cfg.frame_hop_s(),
            source_sr: self.cfg.sample_rate,
        })
    }
}

/// One-shot log-mel computation.
pub fn compute_logmel(w: &Waveform, window: usize, hop: usize, n_mels: usize) -> Result<LogMel> {
    let cfg = FrontendConfig {
        sample_rate: w.sample_rate(),
        window,
        hop,
        n_mels,
    };
    LogMelExtractor::new(cfg)?.compute(w)
}

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reflect padding without repeating the edge sample. Signals shorter than the
/// pad are reflected repeatedly.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let idx = |i: isize| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - j;
        }
        j as usize
    };
    (-(pad as isize)..n + pad as isize).map(|i| x[idx(i)]).collect()
}

/// Frequency (Hz) of the strongest STFT bin, averaged power over all frames.
pub fn peak_frequency(w: &Waveform, n_fft: usize) -> Result<f64> {
    let cfg = FrontendConfig {
        sample_rate: w.sample_rate(),
        window: n_fft,
        hop: n_fft / 4,
        n_mels: 1,
    };
    let spec = LogMelExtractor::new(cfg)?.power_spectrogram(w)?;
    let mean = spec.mean_axis(ndarray::Axis(0)).expect("non-empty spectrogram");
    let (k, _) = mean
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    Ok(k as f64 * w.sample_rate() as f64 / n_fft as f64)
}
