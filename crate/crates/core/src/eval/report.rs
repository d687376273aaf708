use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Example, FeatureSet};
use crate::error::{Result, TsdError};
use crate::model::TsdModel;
use crate::scenegen::{EventLabel, Polarity};

use super::{postprocess, segment_scores, ClassCounts, EvalConfig, SegmentScores};

/// Full-scale URBAN-SED figures `(segment F1 %, accuracy %)` printed beside
/// desk-scale results for orientation. They are not reproduction targets.
pub const FULL_SCALE_REFERENCE: (f64, f64) = (83.15, 95.17);

/// Anything that maps one pair to frame probabilities on the encoder grid.
pub trait Detector {
    fn frame_probs(&self, set: &FeatureSet, ex: &Example) -> Result<Vec<f64>>;
}

impl Detector for TsdModel {
    fn frame_probs(&self, set: &FeatureSet, ex: &Example) -> Result<Vec<f64>> {
        Ok(self.predict(set.mixture(ex), set.reference(ex))?.detection.probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub pair_id: String,
    pub scene_id: String,
    pub target_class: usize,
    pub polarity: Polarity,
    pub detected: bool,
    pub max_prob: f64,
    pub events: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub name: String,
    pub pairs: usize,
    #[serde(flatten)]
    pub counts: ClassCounts,
    pub f1: f64,
    pub accuracy: f64,
    /// Whether the class enters the macro average.
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    pub segment_s: f64,
    pub n_pairs: usize,
    pub segment_f1: f64,
    pub accuracy: f64,
    pub classes: Vec<ClassReport>,
    pub pairs: Vec<PairDecision>,
}

#[derive(Serialize)]
struct MacroRecord<'a> {
    class_id: &'a str,
    segment_f1: f64,
    accuracy: f64,
    n_pairs: usize,
    threshold: f64,
    segment_s: f64,
}

/// Runs the detector on every pair, decodes events for the pair's target
/// class and scores them against the scene's target-class events (an empty
/// reference for negative pairs). Tallies are per target class.
pub fn evaluate(detector: &dyn Detector, set: &FeatureSet, cfg: &EvalConfig) -> Result<Report> {
    let n_classes = set.n_classes();
    let mut total = SegmentScores::new(n_classes);
    let mut pair_counts = vec![0usize; n_classes];
    let mut pairs = Vec::with_capacity(set.len());
    for ex in &set.examples {
        if ex.target_class >= n_classes {
            return Err(TsdError::ClassListMismatch);
        }
        let probs = detector.frame_probs(set, ex)?;
        let decoded = postprocess(&probs, cfg, set.frame_hop_s);
        let label = |&(onset, offset): &(f64, f64)| EventLabel {
            onset,
            offset: offset.min(ex.duration),
            class_id: ex.target_class,
        };
        let reference: Vec<EventLabel> = ex.events.iter().map(label).collect();
        let estimated: Vec<EventLabel> = decoded.events.iter().map(label).collect();
        let s = segment_scores(&reference, &estimated, ex.duration, cfg.segment_s, n_classes);
        total.classes[ex.target_class].add(&s.classes[ex.target_class]);
        pair_counts[ex.target_class] += 1;
        pairs.push(PairDecision {
            pair_id: ex.pair_id.clone(),
            scene_id: ex.scene_id.clone(),
            target_class: ex.target_class,
            polarity: ex.polarity,
            detected: !decoded.events.is_empty(),
            max_prob: probs.iter().copied().fold(0.0, f64::max),
            events: decoded.events,
        });
    }
    let classes = total
        .classes
        .iter()
        .enumerate()
        .map(|(c, counts)| ClassReport {
            class_id: c,
            name: set.class_names[c].clone(),
            pairs: pair_counts[c],
            counts: *counts,
            f1: counts.f1(),
            accuracy: counts.accuracy(),
            included: counts.has_activity(),
        })
        .collect();
    Ok(Report {
        threshold: cfg.threshold,
        segment_s: cfg.segment_s,
        n_pairs: set.len(),
        segment_f1: total.macro_f1(),
        accuracy: total.macro_accuracy(),
        classes,
        pairs,
    })
}

impl Report {
    pub fn segment_scores(&self) -> SegmentScores {
        SegmentScores {
            classes: self.classes.iter().map(|c| c.counts).collect(),
        }
    }

    /// Human-readable per-class table followed by the macro line.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<20}{:>6}{:>7}{:>7}{:>7}{:>7}{:>9}{:>9}\n",
            "class", "pairs", "TP", "FP", "FN", "TN", "F1 %", "Acc %"
        );
        for c in &self.classes {
            let mark = if c.included { "" } else { " *" };
            out.push_str(&format!(
                "{:<20}{:>6}{:>7}{:>7}{:>7}{:>7}{:>9.2}{:>9.2}{mark}\n",
                c.name,
                c.pairs,
                c.counts.tp,
                c.counts.fp,
                c.counts.fn_,
                c.counts.tn,
                100.0 * c.f1,
                100.0 * c.accuracy
            ));
        }
        out.push_str(&format!(
            "{:<20}{:>6}{:>28}{:>9.2}{:>9.2}\n",
            "macro",
            self.n_pairs,
            "",
            100.0 * self.segment_f1,
            100.0 * self.accuracy
        ));
        out.push_str(&format!(
            "threshold {}  segment {} s  (* no activity, excluded from macro)\n",
            self.threshold, self.segment_s
        ));
        out.push_str(&format!(
            "full-scale reference: segment F1 {:.2} %, accuracy {:.2} %\n",
            FULL_SCALE_REFERENCE.0, FULL_SCALE_REFERENCE.1
        ));
        out
    }

    /// Writes `report.txt`, `classes.jsonl` (one record per class plus a
    /// `"macro"` record) and `pairs.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_atomic(&dir.join("report.txt"), self.table().as_bytes())?;
        let mut lines = Vec::new();
        for c in &self.classes {
            lines.push(serde_json::to_string(c)?);
        }
        lines.push(serde_json::to_string(&MacroRecord {
            class_id: "macro",
            segment_f1: self.segment_f1,
            accuracy: self.accuracy,
            n_pairs: self.n_pairs,
            threshold: self.threshold,
            segment_s: self.segment_s,
        })?);
        let mut text = lines.join("\n");
        text.push('\n');
        crate::io::write_atomic(&dir.join("classes.jsonl"), text.as_bytes())?;
        crate::io::write_jsonl(&dir.join("pairs.jsonl"), &self.pairs)
    }
}
