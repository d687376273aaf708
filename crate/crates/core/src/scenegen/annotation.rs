//! Tab-separated annotation sidecars, one file per clip, one event per line:
//!
//! ```text
//! 0.500\t2.250\tdog_bark
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Result, TsdError};
use crate::signal::wav_duration;

use super::{AudioRef, EventLabel, Scene};

fn fmt_time(v: f64) -> String {
    if ((v * 1000.0).round() / 1000.0) == v {
        format!("{v:.3}")
    } else {
        format!("{v}")
    }
}

pub fn write_annotations(path: &Path, events: &[EventLabel], class_names: &[String]) -> Result<()> {
    let mut out = String::new();
    for e in events {
        let name = class_names.get(e.class_id).ok_or_else(|| {
            TsdError::InvalidArgument(format!("class id {} has no name", e.class_id))
        })?;
        out.push_str(&format!("{}\t{}\t{name}\n", fmt_time(e.onset), fmt_time(e.offset)));
    }
    crate::io::write_atomic(path, out.as_bytes())
}

/// Parses sidecar text. `path` only labels errors.
pub fn parse_annotations(text: &str, path: &Path, class_names: &[String]) -> Result<Vec<EventLabel>> {
    let err = |line: usize, msg: String| TsdError::Annotation {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(line, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("bad {what} `{s}`")))
        };
        let onset = num(fields[0], "onset")?;
        let offset = num(fields[1], "offset")?;
        if onset < 0.0 {
            return Err(err(line, format!("negative onset {onset}")));
        }
        if offset <= onset {
            return Err(err(line, format!("offset {offset} not after onset {onset}")));
        }
        let class_id = class_names
            .iter()
            .position(|c| c == fields[2])
            .ok_or_else(|| TsdError::UnknownClass {
                path: path.to_path_buf(),
                line,
                name: fields[2].to_string(),
            })?;
        events.push(EventLabel {
            onset,
            offset,
            class_id,
        });
    }
    Ok(events)
}

pub fn read_annotations(path: &Path, class_names: &[String]) -> Result<Vec<EventLabel>> {
    parse_annotations(&fs::read_to_string(path)?, path, class_names)
}

/// Reads every `*.txt` sidecar in `annotation_dir` (sorted by name) and pairs
/// it with `audio_dir/<stem>.wav`. Scene duration comes from the WAV header;
/// offsets overshooting it by up to 50 ms are clipped.
pub fn ingest_external(annotation_dir: &Path, audio_dir: &Path, class_names: &[String]) -> Result<Vec<Scene>> {
    let mut files: Vec<_> = fs::read_dir(annotation_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut scenes = Vec::with_capacity(files.len());
    for ann in files {
        let stem = ann
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let wav = audio_dir.join(format!("{stem}.wav"));
        let duration = wav_duration(&wav)?;
        let mut events = read_annotations(&ann, class_names)?;
        for (i, e) in events.iter_mut().enumerate() {
            if e.offset > duration + 0.05 || e.onset >= duration {
                return Err(TsdError::InvalidArgument(format!(
                    "{}: event #{} ({:.3}..{:.3} s) outside the {duration:.3} s clip",
                    ann.display(),
                    i + 1,
                    e.onset,
                    e.offset
                )));
            }
            e.offset = e.offset.min(duration);
        }
        scenes.push(Scene {
            scene_id: stem,
            audio: AudioRef::File(wav),
            duration,
            events,
        });
    }
    Ok(scenes)
}
