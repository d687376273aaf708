//! Synthetic soundscapes, reference clips and reference/mixture pairs.
//!
//! A scene is a mixture clip with strong `(onset, offset, class)` labels. A
//! pair joins a scene with a reference clip of one target class. In `strong`
//! mode every pair is positive (one per distinct class in the scene); in
//! `strong_plus` mode each scene also gets negatives whose target class is
//! absent from it.

mod annotation;
mod corpus;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};
use crate::signal::FrontendConfig;

pub use annotation::{ingest_external, parse_annotations, read_annotations, write_annotations};
pub use corpus::{
    generate_corpus, generate_split, load_manifest_file, synth_class_names, CorpusConfig, DatasetDir, DatasetInfo,
    GeneratedSplit, LoadedSplit, ManifestRecord, SplitCount, DATASET_FORMAT, DATASET_VERSION,
};
pub use synth::{
    background, build_scene, class_band, class_envelope, synth_event, Envelope, EventSpec, BACKGROUND_RMS,
    N_SYNTH_CLASSES, SYNTH_CLASS_NAMES,
};

/// SplitMix64-style mixing of a base seed with a list of tags. Used to give
/// every scene, event and reference an independent, order-free seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventLabel {
    pub onset: f64,
    pub offset: f64,
    pub class_id: usize,
}

/// Where a clip's audio comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AudioRef {
    File(PathBuf),
    Generated(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub audio: AudioRef,
    pub duration: f64,
    pub events: Vec<EventLabel>,
}

impl Scene {
    /// Distinct classes present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.events.iter().map(|e| e.class_id).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn has_class(&self, class_id: usize) -> bool {
        self.events.iter().any(|e| e.class_id == class_id)
    }

    /// `(onset, offset)` of every event of `class_id`, in label order.
    pub fn intervals(&self, class_id: usize) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .filter(|e| e.class_id == class_id)
            .map(|e| (e.onset, e.offset))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceClip {
    pub ref_id: String,
    pub audio: AudioRef,
    pub class_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strong,
    StrongPlus,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Strong, Mode::StrongPlus];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Strong => "strong",
            Mode::StrongPlus => "strong_plus",
        }
    }
}

macro_rules! named_enum_parse {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = TsdError;
            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| TsdError::InvalidArgument(format!("unknown {} `{s}`", stringify!($t).to_lowercase())))
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum_parse!(Split);
named_enum_parse!(Mode);
named_enum_parse!(Polarity);

/// Encoder frame grid: how many frames a clip yields and their hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    pub frontend: FrontendConfig,
    pub time_downsample: usize,
}

impl FrameGrid {
    pub fn new(frontend: FrontendConfig, time_downsample: usize) -> Self {
        Self {
            frontend,
            time_downsample,
        }
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.frontend.frame_hop_s() * self.time_downsample as f64
    }

    pub fn frames_for_samples(&self, len: usize) -> usize {
        self.frontend.spec_frames(len).div_ceil(self.time_downsample)
    }

    pub fn frames_for_duration(&self, duration: f64) -> usize {
        self.frames_for_samples((duration * self.frontend.sample_rate as f64).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub pair_id: String,
    pub scene_id: String,
    pub ref_id: String,
    pub target_class: usize,
    pub polarity: Polarity,
    pub frame_targets: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub mode: Mode,
    pub class_names: Vec<String>,
    pub pairs: Vec<PairSample>,
}

impl DatasetManifest {
    pub fn n_positive(&self) -> usize {
        self.pairs.iter().filter(|p| p.polarity == Polarity::Positive).count()
    }

    pub fn n_negative(&self) -> usize {
        self.pairs.len() - self.n_positive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOptions {
    pub split: Split,
    pub mode: Mode,
    pub negatives_per_scene: usize,
    pub seed: u64,
}

/// Frame `i` is active iff its center `(i + 0.5) * frame_hop_s` lies in
/// `[onset, offset)` of some target-class event.
pub fn frame_targets_for(scene: &Scene, target_class: usize, n_frames: usize, frame_hop_s: f64) -> Vec<u8> {
    let spans = scene.intervals(target_class);
    (0..n_frames)
        .map(|i| {
            let c = (i as f64 + 0.5) * frame_hop_s;
            spans.iter().any(|&(on, off)| on <= c && c < off) as u8
        })
        .collect()
}

/// Forms reference/mixture pairs. Positives take one reference per distinct
/// scene class; negatives sample absent classes uniformly. Both draws are
/// seeded from `seed` through separate streams, so the positive pairs of a
/// `strong_plus` manifest equal the `strong` manifest built with the same seed.
pub fn build_pairs(
    scenes: &[Scene],
    refs: &[ReferenceClip],
    class_names: &[String],
    opts: &PairOptions,
    grid: &FrameGrid,
) -> Result<DatasetManifest> {
    let PairOptions {
        split,
        mode,
        negatives_per_scene,
        seed,
    } = *opts;
    let n_classes = class_names.len();
    let mut by_class: BTreeMap<usize, Vec<&ReferenceClip>> = BTreeMap::new();
    for r in refs {
        if r.class_id >= n_classes {
            return Err(TsdError::InvalidArgument(format!(
                "reference `{}` has class {} of {n_classes}",
                r.ref_id, r.class_id
            )));
        }
        by_class.entry(r.class_id).or_default().push(r);
    }
    if let Some(missing) = (0..n_classes).find(|c| !by_class.contains_key(c)) {
        return Err(TsdError::InvalidArgument(format!(
            "no reference clip for class {missing} (`{}`)",
            class_names[missing]
        )));
    }

    let mut pos_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x90]));
    let mut neg_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x4e]));
    let hop = grid.frame_hop_s();
    let mut pairs = Vec::new();
    for scene in scenes {
        let n_frames = grid.frames_for_duration(scene.duration);
        let present = scene.classes();
        if let Some(&bad) = present.iter().find(|&&c| c >= n_classes) {
            return Err(TsdError::InvalidArgument(format!(
                "scene `{}` has class {bad} of {n_classes}",
                scene.scene_id
            )));
        }
        for (k, &class) in present.iter().enumerate() {
            let r = by_class[&class].choose(&mut pos_rng).expect("non-empty class refs");
            pairs.push(PairSample {
                pair_id: format!("{}-p{k}", scene.scene_id),
                scene_id: scene.scene_id.clone(),
                ref_id: r.ref_id.clone(),
                target_class: class,
                polarity: Polarity::Positive,
                frame_targets: frame_targets_for(scene, class, n_frames, hop),
            });
        }
        if mode == Mode::Strong || negatives_per_scene == 0 {
            continue;
        }
        let absent: Vec<usize> = (0..n_classes).filter(|c| !present.contains(c)).collect();
        if absent.is_empty() {
            log::warn!("scene `{}` contains every class; no negative pair", scene.scene_id);
            continue;
        }
        for k in 0..negatives_per_scene {
            let class = *absent.choose(&mut neg_rng).expect("non-empty");
            let r = by_class[&class].choose(&mut neg_rng).expect("non-empty class refs");
            pairs.push(PairSample {
                pair_id: format!("{}-n{k}", scene.scene_id),
                scene_id: scene.scene_id.clone(),
                ref_id: r.ref_id.clone(),
                target_class: class,
                polarity: Polarity::Negative,
                frame_targets: vec![0; n_frames],
            });
        }
    }
    Ok(DatasetManifest {
        split,
        mode,
        class_names: class_names.to_vec(),
        pairs,
    })
}

/// Pair counts per split and mode in a two-column table:
///
/// ```text
/// Type        Strong  Strong+
/// Training       ...      ...
/// ```
pub fn summary_table(counts: &BTreeMap<(Split, Mode), usize>) -> String {
    let mut out = format!("{:<12}{:>8}{:>9}\n", "Type", "Strong", "Strong+");
    for split in Split::ALL {
        let label = match split {
            Split::Train => "Training",
            Split::Val => "Validation",
            Split::Test => "Test",
        };
        let get = |m| counts.get(&(split, m)).copied().unwrap_or(0);
        out.push_str(&format!("{label:<12}{:>8}{:>9}\n", get(Mode::Strong), get(Mode::StrongPlus)));
    }
    out
}

#[cfg(test)]
mod tests;
