//! Post-processing and segment-based scoring.
//!
//! Frame probabilities go through a fixed chain: [`binarize`] at a threshold
//! (active when `p >= threshold`), [`median_filter3`] with zero padding, and
//! [`frames_to_events`], which turns each maximal run of ones `[i..=j]` into
//! `(i * hop, (j + 1) * hop)`.
//!
//! [`segment_scores`] splits a clip into `ceil(duration / segment)` segments.
//! A class is active in a segment when one of its events overlaps it with
//! positive duration. Per class the segments are tallied into TP/FP/FN/TN.
//! Macro averages skip classes with neither reference nor estimated activity.

mod ablation;
mod plot;
mod report;

use serde::{Deserialize, Serialize};

use crate::scenegen::EventLabel;

pub use ablation::{ablation_grid, run_ablation, AblationRow, AblationTable, AblationVariant, EncoderDesign};
pub use plot::{f1_bar_chart, localization_figure, LocalizationPlot};
pub use report::{evaluate, ClassReport, Detector, PairDecision, Report, FULL_SCALE_REFERENCE};

pub const DEFAULT_THRESHOLD: f64 = 0.37;
pub const DEFAULT_SEGMENT_S: f64 = 0.2;

/// Tolerance for segment boundary comparisons in seconds.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub threshold: f64,
    pub segment_s: f64,
    pub median_filter: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            segment_s: DEFAULT_SEGMENT_S,
            median_filter: true,
        }
    }
}

pub fn binarize(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| (p >= threshold) as u8).collect()
}

/// Width-3 median with zero padding. For binary input the median of three
/// values is their majority.
pub fn median_filter3(b: &[u8]) -> Vec<u8> {
    let at = |i: isize| -> u8 {
        if i < 0 {
            0
        } else {
            b.get(i as usize).copied().unwrap_or(0)
        }
    };
    (0..b.len() as isize)
        .map(|i| (at(i - 1) + at(i) + at(i + 1) >= 2) as u8)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedEvents {
    pub events: Vec<(f64, f64)>,
    pub frame_hop_s: f64,
}

pub fn frames_to_events(b: &[u8], frame_hop_s: f64) -> DecodedEvents {
    let mut events = Vec::new();
    let mut start = None;
    for (i, &v) in b.iter().chain(std::iter::once(&0)).enumerate() {
        match (v != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push((s as f64 * frame_hop_s, i as f64 * frame_hop_s));
                start = None;
            }
            _ => {}
        }
    }
    DecodedEvents { events, frame_hop_s }
}

/// The full chain: binarize, optional median filter, decode.
pub fn postprocess(probs: &[f64], cfg: &EvalConfig, frame_hop_s: f64) -> DecodedEvents {
    let b = binarize(probs, cfg.threshold);
    let b = if cfg.median_filter { median_filter3(&b) } else { b };
    frames_to_events(&b, frame_hop_s)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `2TP / (2TP + FP + FN)`; 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / d as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    /// Whether the class was active in the reference or the estimate.
    pub fn has_activity(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    pub fn add(&mut self, o: &ClassCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub classes: Vec<ClassCounts>,
}

impl SegmentScores {
    pub fn new(n_classes: usize) -> Self {
        Self {
            classes: vec![ClassCounts::default(); n_classes],
        }
    }

    pub fn accumulate(&mut self, o: &SegmentScores) {
        for (a, b) in self.classes.iter_mut().zip(&o.classes) {
            a.add(b);
        }
    }

    fn active(&self) -> impl Iterator<Item = &ClassCounts> {
        self.classes.iter().filter(|c| c.has_activity())
    }

    fn macro_mean(&self, f: impl Fn(&ClassCounts) -> f64) -> f64 {
        let n = self.active().count();
        if n == 0 {
            0.0
        } else {
            self.active().map(f).sum::<f64>() / n as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_mean(ClassCounts::f1)
    }

    pub fn macro_accuracy(&self) -> f64 {
        self.macro_mean(ClassCounts::accuracy)
    }
}

pub fn n_segments(clip_dur: f64, segment: f64) -> usize {
    (clip_dur / segment - TIME_EPS).ceil().max(0.0) as usize
}

/// Per-segment activity of `class_id` as a dense boolean vector.
fn activity(events: &[EventLabel], class_id: usize, n: usize, segment: f64) -> Vec<bool> {
    let mut act = vec![false; n];
    for e in events.iter().filter(|e| e.class_id == class_id) {
        if e.offset - e.onset <= TIME_EPS || n == 0 {
            continue;
        }
        let first = (e.onset / segment + TIME_EPS).floor().max(0.0) as usize;
        let end = ((e.offset / segment - TIME_EPS).ceil().max(0.0) as usize).min(n);
        for a in act.iter_mut().take(end).skip(first) {
            *a = true;
        }
    }
    act
}

/// Segment-based TP/FP/FN/TN per class for one clip.
pub fn segment_scores(
    reference: &[EventLabel],
    estimated: &[EventLabel],
    clip_dur: f64,
    segment: f64,
    n_classes: usize,
) -> SegmentScores {
    let n = n_segments(clip_dur, segment);
    let mut out = SegmentScores::new(n_classes);
    for (c, counts) in out.classes.iter_mut().enumerate() {
        let r = activity(reference, c, n, segment);
        let e = activity(estimated, c, n, segment);
        for (&r, &e) in r.iter().zip(&e) {
            match (r, e) {
                (true, true) => counts.tp += 1,
                (false, true) => counts.fp += 1,
                (true, false) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }
    out
}
