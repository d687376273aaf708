//! Deterministic inputs shared by the benchmarks.

use tsdet::config::RunConfig;
use tsdet::scenegen::EventLabel;
use tsdet::signal::{LogMel, LogMelExtractor, Waveform};

/// A chirp-plus-tone signal of `seconds` at `sample_rate`.
pub fn test_signal(seconds: f64, sample_rate: u32) -> Waveform {
    let n = (seconds * sample_rate as f64) as usize;
    let sr = sample_rate as f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            0.3 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                + 0.2 * (2.0 * std::f64::consts::PI * (200.0 + 600.0 * t) * t).sin()
        })
        .collect();
    Waveform::new(samples, sample_rate).expect("valid waveform")
}

/// Mixture and reference features for the given configuration.
pub fn pair_features(cfg: &RunConfig) -> (LogMel, LogMel) {
    let ex = LogMelExtractor::new(cfg.signal).expect("valid front-end");
    let sr = cfg.signal.sample_rate;
    let mix = ex.compute(&test_signal(cfg.scenegen.scene_duration, sr)).unwrap();
    let reference = ex.compute(&test_signal(cfg.scenegen.ref_duration, sr)).unwrap();
    (mix, reference)
}

/// `n` events spread over a 10 s clip, cycling through `classes`.
pub fn event_layout(n: usize, classes: usize, offset: f64) -> Vec<EventLabel> {
    (0..n)
        .map(|i| {
            let onset = (i as f64 * 1.37 + offset) % 9.0;
            EventLabel {
                onset,
                offset: onset + 0.3 + (i % 5) as f64 * 0.2,
                class_id: i % classes,
            }
        })
        .collect()
}
