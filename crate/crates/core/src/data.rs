//! Model-ready examples: cached log-mels for every mixture and reference plus
//! per-pair frame targets on the encoder grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Result, TsdError};
use crate::scenegen::{
    frame_targets_for, AudioRef, DatasetManifest, GeneratedSplit, LoadedSplit, Polarity, Scene,
};
use crate::signal::{read_wav, resample, LogMel, LogMelExtractor, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pair_id: String,
    pub scene_id: String,
    pub ref_id: String,
    pub target_class: usize,
    pub polarity: Polarity,
    /// Index into [`FeatureSet::mixtures`].
    pub mixture: usize,
    /// Index into [`FeatureSet::references`].
    pub reference: usize,
    /// Frame targets on the encoder grid, as 0.0 / 1.0.
    pub targets: Vec<f64>,
    /// Target-class `(onset, offset)` intervals in the scene.
    pub events: Vec<(f64, f64)>,
    pub duration: f64,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub class_names: Vec<String>,
    /// Encoder frame hop in seconds.
    pub frame_hop_s: f64,
    pub mixtures: Arc<Vec<LogMel>>,
    pub references: Arc<Vec<LogMel>>,
    pub examples: Vec<Example>,
}

fn to_rate(w: Waveform, sr: u32) -> Result<Waveform> {
    if w.sample_rate() == sr {
        Ok(w)
    } else {
        resample(&w, sr)
    }
}

impl FeatureSet {
    /// Generic constructor; audio is fetched through the two callbacks once
    /// per distinct scene / reference id.
    pub fn build(
        manifest: &DatasetManifest,
        scenes: &BTreeMap<String, Scene>,
        mut scene_audio: impl FnMut(&Scene) -> Result<Waveform>,
        mut ref_audio: impl FnMut(&str) -> Result<Waveform>,
        extractor: &LogMelExtractor,
        time_downsample: usize,
    ) -> Result<Self> {
        let sr = extractor.config().sample_rate;
        let frame_hop_s = extractor.config().frame_hop_s() * time_downsample as f64;
        let mut mixtures = Vec::new();
        let mut references = Vec::new();
        let mut mix_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut ref_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut examples = Vec::with_capacity(manifest.pairs.len());
        for p in &manifest.pairs {
            let scene = scenes
                .get(&p.scene_id)
                .ok_or_else(|| TsdError::MissingFeature(p.scene_id.clone()))?;
            let mixture = match mix_index.get(&p.scene_id) {
                Some(&i) => i,
                None => {
                    let lm = extractor.compute(&to_rate(scene_audio(scene)?, sr)?)?;
                    mixtures.push(lm);
                    mix_index.insert(p.scene_id.clone(), mixtures.len() - 1);
                    mixtures.len() - 1
                }
            };
            let reference = match ref_index.get(&p.ref_id) {
                Some(&i) => i,
                None => {
                    let lm = extractor.compute(&to_rate(ref_audio(&p.ref_id)?, sr)?)?;
                    references.push(lm);
                    ref_index.insert(p.ref_id.clone(), references.len() - 1);
                    references.len() - 1
                }
            };
            let n_frames = mixtures[mixture].n_frames().div_ceil(time_downsample);
            let targets = frame_targets_for(scene, p.target_class, n_frames, frame_hop_s)
                .into_iter()
                .map(f64::from)
                .collect();
            examples.push(Example {
                pair_id: p.pair_id.clone(),
                scene_id: p.scene_id.clone(),
                ref_id: p.ref_id.clone(),
                target_class: p.target_class,
                polarity: p.polarity,
                mixture,
                reference,
                targets,
                events: scene.intervals(p.target_class),
                duration: scene.duration,
            });
        }
        Ok(Self {
            class_names: manifest.class_names.clone(),
            frame_hop_s,
            mixtures: Arc::new(mixtures),
            references: Arc::new(references),
            examples,
        })
    }

    /// Features for an in-memory generated split.
    pub fn from_generated(
        gs: &GeneratedSplit,
        manifest: &DatasetManifest,
        extractor: &LogMelExtractor,
        time_downsample: usize,
    ) -> Result<Self> {
        let scene_pos: BTreeMap<&str, usize> =
            gs.scenes.iter().enumerate().map(|(i, s)| (s.scene_id.as_str(), i)).collect();
        let ref_pos: BTreeMap<&str, usize> =
            gs.refs.iter().enumerate().map(|(i, r)| (r.ref_id.as_str(), i)).collect();
        let scenes: BTreeMap<String, Scene> = gs.scenes.iter().map(|s| (s.scene_id.clone(), s.clone())).collect();
        Self::build(
            manifest,
            &scenes,
            |s| Ok(gs.scene_audio[scene_pos[s.scene_id.as_str()]].clone()),
            |id| {
                ref_pos
                    .get(id)
                    .map(|&i| gs.ref_audio[i].clone())
                    .ok_or_else(|| TsdError::MissingFeature(id.to_string()))
            },
            extractor,
            time_downsample,
        )
    }

    /// Features for a split read from disk; WAVs at other rates are resampled.
    pub fn from_loaded(ls: &LoadedSplit, extractor: &LogMelExtractor, time_downsample: usize) -> Result<Self> {
        let file = |a: &AudioRef, id: &str| match a {
            AudioRef::File(p) => read_wav(p),
            AudioRef::Generated(_) => Err(TsdError::MissingFeature(id.to_string())),
        };
        Self::build(
            &ls.manifest,
            &ls.scenes,
            |s| file(&s.audio, &s.scene_id),
            |id| {
                let r = ls.refs.get(id).ok_or_else(|| TsdError::MissingFeature(id.to_string()))?;
                file(&r.audio, id)
            },
            extractor,
            time_downsample,
        )
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn mixture(&self, ex: &Example) -> &LogMel {
        &self.mixtures[ex.mixture]
    }

    pub fn reference(&self, ex: &Example) -> &LogMel {
        &self.references[ex.reference]
    }

    /// Mean and standard deviation over every mixture and reference bin,
    /// suitable for `EncoderConfig::{input_mean, input_std}`.
    pub fn input_stats(&self) -> (f64, f64) {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for lm in self.mixtures.iter().chain(self.references.iter()) {
            for &v in lm.values.iter() {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0 {
            return (0.0, 1.0);
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
    }

    /// Same features, only the examples accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&Example) -> bool) -> Self {
        Self {
            class_names: self.class_names.clone(),
            frame_hop_s: self.frame_hop_s,
            mixtures: Arc::clone(&self.mixtures),
            references: Arc::clone(&self.references),
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}
