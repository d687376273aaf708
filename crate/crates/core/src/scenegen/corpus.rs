//! Corpus generation and the on-disk dataset layout.
//!
//! ```text
//! <root>/dataset.json                      DatasetInfo
//! <root>/summary.txt                       pair counts per split and mode
//! <root>/manifests/<split>_<mode>.jsonl    one ManifestRecord per line
//! <root>/audio/<split>/scenes/<scene_id>.wav
//! <root>/audio/<split>/refs/<ref_id>.wav
//! <root>/annotations/<split>/<scene_id>.txt
//! ```
//!
//! Paths inside records are relative to `<root>` and use `/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsdError};
use crate::signal::{wav_duration, write_wav, Waveform, TARGET_SAMPLE_RATE};

use super::annotation::{read_annotations, write_annotations};
use super::synth::{background, build_scene, synth_event, EventSpec, BACKGROUND_RMS, N_SYNTH_CLASSES, SYNTH_CLASS_NAMES};
use super::{
    build_pairs, derive_seed, frame_targets_for, summary_table, AudioRef, DatasetManifest, FrameGrid, Mode,
    PairOptions, PairSample, Polarity, ReferenceClip, Scene, Split,
};

pub const DATASET_FORMAT: &str = "tsdet-dataset";
pub const DATASET_VERSION: u32 = 1;

const REF_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub n_scenes: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub scene_duration: f64,
    pub min_events: usize,
    pub max_events: usize,
    pub min_event_duration: f64,
    pub max_event_duration: f64,
    pub snr_db: f64,
    pub refs_per_class: usize,
    pub ref_duration: f64,
    pub negatives_per_scene: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_scenes: 60,
            val_fraction: 0.15,
            test_fraction: 0.15,
            scene_duration: 10.0,
            min_events: 1,
            max_events: 9,
            min_event_duration: 0.5,
            max_event_duration: 3.0,
            snr_db: 6.0,
            refs_per_class: 5,
            ref_duration: 2.0,
            negatives_per_scene: 1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TsdError::Config(format!("scenegen: {m}")));
        if !(0.0..1.0).contains(&self.val_fraction)
            || !(0.0..1.0).contains(&self.test_fraction)
            || self.val_fraction + self.test_fraction >= 1.0
        {
            return bad("val_fraction + test_fraction must lie in [0, 1)");
        }
        if !(self.scene_duration > 0.0) || !(self.ref_duration > 0.0) {
            return bad("durations must be positive");
        }
        if self.min_events == 0 || self.min_events > self.max_events {
            return bad("need 1 <= min_events <= max_events");
        }
        if !(self.min_event_duration > 0.0) || self.min_event_duration > self.max_event_duration {
            return bad("need 0 < min_event_duration <= max_event_duration");
        }
        if self.refs_per_class == 0 {
            return bad("refs_per_class must be positive");
        }
        Ok(())
    }

    /// Scene counts for train, val and test.
    pub fn split_sizes(&self) -> [(Split, usize); 3] {
        let n = self.n_scenes;
        let val = (n as f64 * self.val_fraction).round() as usize;
        let test = (n as f64 * self.test_fraction).round() as usize;
        let train = n.saturating_sub(val + test);
        [(Split::Train, train), (Split::Val, val), (Split::Test, test)]
    }
}

/// Scenes and references of one split together with their audio.
#[derive(Debug, Clone)]
pub struct GeneratedSplit {
    pub split: Split,
    pub scenes: Vec<Scene>,
    pub scene_audio: Vec<Waveform>,
    pub refs: Vec<ReferenceClip>,
    pub ref_audio: Vec<Waveform>,
}

impl GeneratedSplit {
    pub fn manifest(&self, mode: Mode, negatives_per_scene: usize, seed: u64, grid: &FrameGrid) -> Result<DatasetManifest> {
        let opts = PairOptions {
            split: self.split,
            mode,
            negatives_per_scene,
            seed: derive_seed(seed, &[split_tag(self.split), 0x9a1]),
        };
        build_pairs(&self.scenes, &self.refs, &synth_class_names(), &opts, grid)
    }
}

pub fn synth_class_names() -> Vec<String> {
    SYNTH_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

fn split_tag(split: Split) -> u64 {
    split as u64 + 1
}

/// Generates one split of `n_scenes` scenes plus its reference bank.
pub fn generate_split(cfg: &CorpusConfig, split: Split, n_scenes: usize, seed: u64) -> Result<GeneratedSplit> {
    cfg.validate()?;
    let tag = split_tag(split);
    let scene_ms = (cfg.scene_duration * 1000.0).round() as u64;
    let min_ms = ((cfg.min_event_duration * 1000.0).round() as u64).min(scene_ms);
    let max_ms = ((cfg.max_event_duration * 1000.0).round() as u64).min(scene_ms).max(min_ms);

    let mut scenes = Vec::with_capacity(n_scenes);
    let mut scene_audio = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag, i as u64]));
        let n_events = rng.gen_range(cfg.min_events..=cfg.max_events);
        let mut ms = Vec::with_capacity(n_events);
        let spec: Vec<EventSpec> = (0..n_events)
            .map(|_| {
                let class_id = rng.gen_range(0..N_SYNTH_CLASSES);
                let dur = rng.gen_range(min_ms..=max_ms);
                let on = rng.gen_range(0..=scene_ms - dur);
                ms.push(on + dur);
                EventSpec {
                    class_id,
                    onset: on as f64 / 1000.0,
                    duration: dur as f64 / 1000.0,
                    snr_db: cfg.snr_db,
                }
            })
            .collect();
        let id = format!("{}_{i:05}", split.name());
        let (mut scene, audio) = build_scene(&id, &spec, derive_seed(seed, &[tag, i as u64, 0xbb]), cfg.scene_duration)?;
        for (e, off) in scene.events.iter_mut().zip(ms) {
            e.offset = off as f64 / 1000.0;
        }
        scenes.push(scene);
        scene_audio.push(audio);
    }

    let mut refs = Vec::new();
    let mut ref_audio = Vec::new();
    let n_ref = (cfg.ref_duration * TARGET_SAMPLE_RATE as f64).round() as usize;
    let gain = BACKGROUND_RMS * 10f64.powf(REF_SNR_DB / 20.0);
    for class_id in 0..N_SYNTH_CLASSES {
        for j in 0..cfg.refs_per_class {
            let s = derive_seed(seed, &[tag, 0x7ef, class_id as u64, j as u64]);
            let ev = synth_event(class_id, cfg.ref_duration, s)?;
            let mut x = background(n_ref, s ^ 0xa5).into_samples();
            for (d, &v) in x.iter_mut().zip(ev.samples()) {
                *d += gain * v;
            }
            refs.push(ReferenceClip {
                ref_id: format!("{}_ref_c{class_id:02}_{j:02}", split.name()),
                audio: AudioRef::Generated(s),
                class_id,
            });
            ref_audio.push(Waveform::new(x, TARGET_SAMPLE_RATE)?);
        }
    }
    Ok(GeneratedSplit {
        split,
        scenes,
        scene_audio,
        refs,
        ref_audio,
    })
}

/// All three splits. Fails with "empty dataset" when no scene would be built.
pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Vec<GeneratedSplit>> {
    if cfg.n_scenes == 0 {
        return Err(TsdError::EmptyDataset);
    }
    cfg.split_sizes()
        .into_iter()
        .map(|(split, n)| generate_split(cfg, split, n, seed))
        .collect()
}

/// One line of a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub pair_id: String,
    pub scene_id: String,
    pub ref_id: String,
    pub target_class: usize,
    pub polarity: Polarity,
    pub scene_audio_path: String,
    pub ref_audio_path: String,
    pub annotation_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCount {
    pub split: Split,
    pub mode: Mode,
    pub scenes: usize,
    pub pairs: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub sample_rate: u32,
    pub class_names: Vec<String>,
    pub corpus: CorpusConfig,
    pub counts: Vec<SplitCount>,
}

impl DatasetInfo {
    pub fn summary(&self) -> String {
        let counts: BTreeMap<(Split, Mode), usize> =
            self.counts.iter().map(|c| ((c.split, c.mode), c.pairs)).collect();
        summary_table(&counts)
    }
}

/// A dataset directory on disk.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    root: PathBuf,
    info: DatasetInfo,
}

/// A split read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub manifest: DatasetManifest,
    pub scenes: BTreeMap<String, Scene>,
    pub refs: BTreeMap<String, ReferenceClip>,
}

impl DatasetDir {
    pub fn manifest_path(root: &Path, split: Split, mode: Mode) -> PathBuf {
        root.join("manifests").join(format!("{}_{}.jsonl", split.name(), mode.name()))
    }

    /// Writes audio, sidecars, manifests for both modes, `dataset.json` and
    /// `summary.txt`. Output bytes depend only on the inputs.
    pub fn write(
        root: &Path,
        splits: &[GeneratedSplit],
        cfg: &CorpusConfig,
        seed: u64,
        grid: &FrameGrid,
    ) -> Result<Self> {
        let class_names = synth_class_names();
        let mut counts = Vec::new();
        for gs in splits {
            let s = gs.split.name();
            let rel_scene = |id: &str| format!("audio/{s}/scenes/{id}.wav");
            let rel_ref = |id: &str| format!("audio/{s}/refs/{id}.wav");
            let rel_ann = |id: &str| format!("annotations/{s}/{id}.txt");
            for (scene, audio) in gs.scenes.iter().zip(&gs.scene_audio) {
                write_wav_atomic(&root.join(rel_scene(&scene.scene_id)), audio)?;
                write_annotations(&root.join(rel_ann(&scene.scene_id)), &scene.events, &class_names)?;
            }
            for (r, audio) in gs.refs.iter().zip(&gs.ref_audio) {
                write_wav_atomic(&root.join(rel_ref(&r.ref_id)), audio)?;
            }
            for mode in Mode::ALL {
                let m = gs.manifest(mode, cfg.negatives_per_scene, seed, grid)?;
                let records: Vec<ManifestRecord> = m
                    .pairs
                    .iter()
                    .map(|p| ManifestRecord {
                        pair_id: p.pair_id.clone(),
                        scene_id: p.scene_id.clone(),
                        ref_id: p.ref_id.clone(),
                        target_class: p.target_class,
                        polarity: p.polarity,
                        scene_audio_path: rel_scene(&p.scene_id),
                        ref_audio_path: rel_ref(&p.ref_id),
                        annotation_path: rel_ann(&p.scene_id),
                    })
                    .collect();
                crate::io::write_jsonl(&Self::manifest_path(root, gs.split, mode), &records)?;
                counts.push(SplitCount {
                    split: gs.split,
                    mode,
                    scenes: gs.scenes.len(),
                    pairs: m.pairs.len(),
                    positive: m.n_positive(),
                    negative: m.n_negative(),
                });
            }
        }
        let info = DatasetInfo {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed,
            sample_rate: TARGET_SAMPLE_RATE,
            class_names,
            corpus: cfg.clone(),
            counts,
        };
        let mut json = serde_json::to_string_pretty(&info)?;
        json.push('\n');
        crate::io::write_atomic(&root.join("dataset.json"), json.as_bytes())?;
        crate::io::write_atomic(&root.join("summary.txt"), info.summary().as_bytes())?;
        Ok(Self {
            root: root.to_path_buf(),
            info,
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(root.join("dataset.json"))?;
        let info: DatasetInfo = serde_json::from_str(&text)?;
        if info.format != DATASET_FORMAT || info.version != DATASET_VERSION {
            return Err(TsdError::InvalidArgument(format!(
                "{}: unsupported dataset format {} v{}",
                root.display(),
                info.format,
                info.version
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            info,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn info(&self) -> &DatasetInfo {
        &self.info
    }

    pub fn class_names(&self) -> &[String] {
        &self.info.class_names
    }

    /// Reads one manifest plus the scenes and references it mentions.
    pub fn load_split(&self, split: Split, mode: Mode, grid: &FrameGrid) -> Result<LoadedSplit> {
        load_manifest_file(
            &self.root,
            &Self::manifest_path(&self.root, split, mode),
            split,
            mode,
            &self.info.class_names,
            grid,
        )
    }
}

/// Reads any manifest file whose relative paths resolve against `root`.
pub fn load_manifest_file(
    root: &Path,
    path: &Path,
    split: Split,
    mode: Mode,
    class_names: &[String],
    grid: &FrameGrid,
) -> Result<LoadedSplit> {
    let records: Vec<ManifestRecord> = crate::io::read_jsonl(path)?;
    let mut scenes: BTreeMap<String, Scene> = BTreeMap::new();
    let mut refs: BTreeMap<String, ReferenceClip> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        if rec.target_class >= class_names.len() {
            return Err(TsdError::InvalidArgument(format!(
                "{}: pair `{}` targets class {} of {}",
                path.display(),
                rec.pair_id,
                rec.target_class,
                class_names.len()
            )));
        }
        if !scenes.contains_key(&rec.scene_id) {
            let wav = root.join(&rec.scene_audio_path);
            let duration = wav_duration(&wav)?;
            let events = read_annotations(&root.join(&rec.annotation_path), class_names)?;
            scenes.insert(
                rec.scene_id.clone(),
                Scene {
                    scene_id: rec.scene_id.clone(),
                    audio: AudioRef::File(wav),
                    duration,
                    events,
                },
            );
        }
        refs.entry(rec.ref_id.clone()).or_insert_with(|| ReferenceClip {
            ref_id: rec.ref_id.clone(),
            audio: AudioRef::File(root.join(&rec.ref_audio_path)),
            class_id: rec.target_class,
        });
        let scene = &scenes[&rec.scene_id];
        if (rec.polarity == Polarity::Positive) != scene.has_class(rec.target_class) {
            return Err(TsdError::InvalidArgument(format!(
                "{}: pair `{}` polarity disagrees with the scene annotations",
                path.display(),
                rec.pair_id
            )));
        }
        let n = grid.frames_for_duration(scene.duration);
        pairs.push(PairSample {
            frame_targets: frame_targets_for(scene, rec.target_class, n, grid.frame_hop_s()),
            pair_id: rec.pair_id,
            scene_id: rec.scene_id,
            ref_id: rec.ref_id,
            target_class: rec.target_class,
            polarity: rec.polarity,
        });
    }
    Ok(LoadedSplit {
        manifest: DatasetManifest {
            split,
            mode,
            class_names: class_names.to_vec(),
            pairs,
        },
        scenes,
        refs,
    })
}

fn write_wav_atomic(path: &Path, w: &Waveform) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("wav.tmp");
    write_wav(&tmp, w)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
