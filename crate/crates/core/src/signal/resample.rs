use crate::error::{Result, TsdError};

use super::Waveform;

/// Zero crossings of the interpolation kernel on each side of the center.
const HALF_TAPS: f64 = 32.0;

/// Band-limited resampling with a Blackman-windowed sinc kernel.
///
/// The cutoff sits at the lower of the two Nyquist frequencies. Kernel weights
/// are renormalized per output sample, so constant signals stay constant up to
/// the clip edges. Output length is `round(len * target / source)`.
pub fn resample(w: &Waveform, target_sr: u32) -> Result<Waveform> {
    if target_sr == 0 {
        return Err(TsdError::InvalidArgument("target sample rate must be positive".into()));
    }
    if w.is_empty() {
        return Err(TsdError::EmptyWaveform);
    }
    let src_sr = w.sample_rate();
    if src_sr == target_sr {
        return Ok(w.clone());
    }
    let x = w.samples();
    let ratio = target_sr as f64 / src_sr as f64;
    let out_len = ((x.len() as f64 * ratio).round() as usize).max(1);
    let cutoff = ratio.min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let n = x.len() as isize;

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 / ratio;
        let lo = ((center - half_width).ceil() as isize).max(0);
        let hi = ((center + half_width).floor() as isize).min(n - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let t = center - k as f64;
            let h = cutoff * sinc(cutoff * t) * blackman(t / half_width);
            acc += h * x[k as usize];
            norm += h;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Waveform::new(out, target_sr)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman window on `[-1, 1]`.
fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let a = std::f64::consts::PI * (u + 1.0);
    0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}
