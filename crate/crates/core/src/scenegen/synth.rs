//! Synthetic event bank and scene mixing.
//!
//! Each class owns a disjoint frequency band (equal widths on the HTK mel
//! scale between 250 and 3300 mel, with a guard gap on both sides) and one of
//! four envelope families, picked by `class_id % 4`: steady tone, linear chirp,
//! band-limited noise burst, impulse train.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TsdError};
use crate::signal::mel::mel_to_hz;
use crate::signal::{Waveform, TARGET_SAMPLE_RATE};

use super::{derive_seed, AudioRef, EventLabel, Scene};

pub const N_SYNTH_CLASSES: usize = 10;

/// Class names of the synthetic bank, in id order.
pub const SYNTH_CLASS_NAMES: [&str; N_SYNTH_CLASSES] = [
    "air_conditioner",
    "car_horn",
    "children_playing",
    "dog_bark",
    "drilling",
    "engine_idling",
    "gun_shot",
    "jackhammer",
    "siren",
    "street_music",
];

pub const BACKGROUND_RMS: f64 = 0.05;

const MEL_LO: f64 = 250.0;
const MEL_WIDTH: f64 = 305.0;
const MEL_GUARD: f64 = 45.0;
const RAMP_S: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    Tone,
    Chirp,
    NoiseBurst,
    ImpulseTrain,
}

/// Primary band `(lo_hz, hi_hz)` of a synthetic class.
pub fn class_band(class_id: usize) -> (f64, f64) {
    let lo = MEL_LO + MEL_WIDTH * class_id as f64;
    (mel_to_hz(lo + MEL_GUARD), mel_to_hz(lo + MEL_WIDTH - MEL_GUARD))
}

pub fn class_envelope(class_id: usize) -> Envelope {
    match class_id % 4 {
        0 => Envelope::Tone,
        1 => Envelope::Chirp,
        2 => Envelope::NoiseBurst,
        _ => Envelope::ImpulseTrain,
    }
}

fn check_class(class_id: usize) -> Result<()> {
    if class_id >= N_SYNTH_CLASSES {
        return Err(TsdError::InvalidArgument(format!(
            "class id {class_id} outside the synthetic bank of {N_SYNTH_CLASSES}"
        )));
    }
    Ok(())
}

/// Unit-RMS event of `duration` seconds at 32 kHz, deterministic in all
/// three arguments.
pub fn synth_event(class_id: usize, duration: f64, seed: u64) -> Result<Waveform> {
    check_class(class_id)?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(TsdError::InvalidArgument(format!("event duration must be positive, got {duration}")));
    }
    let sr = TARGET_SAMPLE_RATE as f64;
    let n = ((duration * sr).round() as usize).max(1);
    let (lo, hi) = class_band(class_id);
    let center = 0.5 * (lo + hi);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[class_id as u64, 0x5e7]));
    let mut x = vec![0.0; n];

    match class_envelope(class_id) {
        Envelope::Tone => {
            let f0 = center + (hi - lo) * rng.gen_range(-0.15..0.15);
            let depth = (hi - lo) * 0.08;
            let rate = rng.gen_range(3.0..6.0);
            let mut phase = rng.gen_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let f = f0 + depth * (2.0 * PI * rate * t).sin();
                phase += 2.0 * PI * f / sr;
                *v = phase.sin();
            }
        }
        Envelope::Chirp => {
            let period = rng.gen_range(0.25..0.5);
            let (a, b) = (lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
            let mut phase = rng.gen_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let frac = (t / period).fract();
                let f = a + (b - a) * frac;
                phase += 2.0 * PI * f / sr;
                *v = phase.sin();
            }
        }
        Envelope::NoiseBurst => {
            let parts: Vec<(f64, f64)> = (0..24)
                .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI)))
                .collect();
            let burst = rng.gen_range(0.12..0.2);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let gate = 0.6 + 0.4 * (PI * (t / burst).fract()).sin();
                *v = gate * parts.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>();
            }
        }
        Envelope::ImpulseTrain => {
            let rate = rng.gen_range(8.0..14.0);
            let tau = 0.02;
            let f = center + (hi - lo) * rng.gen_range(-0.1..0.1);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let since = (t * rate).fract() / rate;
                *v = (-since / tau).exp() * (2.0 * PI * f * t).sin();
            }
        }
    }

    let ramp = ((RAMP_S * sr) as usize).min(n / 2);
    for i in 0..ramp {
        let g = i as f64 / ramp as f64;
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
    let r = crate::signal::rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
    Waveform::new(x, TARGET_SAMPLE_RATE)
}

/// Pink-like noise (Kellet's economy filter over uniform white noise) scaled
/// to [`BACKGROUND_RMS`].
pub fn background(n: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xb6]));
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = rng.gen_range(-1.0..1.0);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();
    let r = crate::signal::rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= BACKGROUND_RMS / r);
    }
    Waveform::new(x, TARGET_SAMPLE_RATE).expect("finite background")
}

/// One event to place in a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    pub class_id: usize,
    pub onset: f64,
    pub duration: f64,
    pub snr_db: f64,
}

/// Mixes background noise and the requested events. Event `i` is synthesized
/// with a seed derived from `(background_seed, i)` and scaled so its RMS sits
/// `snr_db` above the background RMS.
pub fn build_scene(
    scene_id: &str,
    spec: &[EventSpec],
    background_seed: u64,
    duration: f64,
) -> Result<(Scene, Waveform)> {
    if !(duration > 0.0) {
        return Err(TsdError::InvalidArgument(format!("scene duration must be positive, got {duration}")));
    }
    let sr = TARGET_SAMPLE_RATE as f64;
    let n = (duration * sr).round() as usize;
    let mut mix = background(n, background_seed).into_samples();
    let mut events = Vec::with_capacity(spec.len());
    for (i, e) in spec.iter().enumerate() {
        check_class(e.class_id)?;
        let offset = e.onset + e.duration;
        if e.onset < 0.0 || !(e.duration > 0.0) || offset > duration + 1e-9 {
            return Err(TsdError::InvalidArgument(format!(
                "event {i} ({:.3}..{offset:.3} s) exceeds the scene bounds 0..{duration} s",
                e.onset
            )));
        }
        let ev = synth_event(e.class_id, e.duration, derive_seed(background_seed, &[i as u64 + 1]))?;
        let gain = BACKGROUND_RMS * 10f64.powf(e.snr_db / 20.0);
        let start = (e.onset * sr).round() as usize;
        for (dst, &s) in mix[start.min(n)..].iter_mut().zip(ev.samples()) {
            *dst += gain * s;
        }
        events.push(EventLabel {
            onset: e.onset,
            offset: offset.min(duration),
            class_id: e.class_id,
        });
    }
    let scene = Scene {
        scene_id: scene_id.to_string(),
        audio: AudioRef::Generated(background_seed),
        duration,
        events,
    };
    Ok((scene, Waveform::new(mix, TARGET_SAMPLE_RATE)?))
}
