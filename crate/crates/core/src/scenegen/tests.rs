use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::signal::{peak_frequency, rms, write_wav, FrontendConfig, Waveform};

fn names() -> Vec<String> {
    synth_class_names()
}

fn grid() -> FrameGrid {
    FrameGrid::new(FrontendConfig::default(), 4)
}

fn scene(id: &str, events: &[(f64, f64, usize)]) -> Scene {
    Scene {
        scene_id: id.into(),
        audio: AudioRef::Generated(0),
        duration: 10.0,
        events: events
            .iter()
            .map(|&(onset, offset, class_id)| EventLabel {
                onset,
                offset,
                class_id,
            })
            .collect(),
    }
}

fn ref_bank(per_class: usize) -> Vec<ReferenceClip> {
    (0..N_SYNTH_CLASSES)
        .flat_map(|c| {
            (0..per_class).map(move |j| ReferenceClip {
                ref_id: format!("r{c}_{j}"),
                audio: AudioRef::Generated(0),
                class_id: c,
            })
        })
        .collect()
}

fn opts(mode: Mode, seed: u64) -> PairOptions {
    PairOptions {
        split: Split::Train,
        mode,
        negatives_per_scene: 1,
        seed,
    }
}

#[test]
fn synth_event_is_seeded() {
    let a = synth_event(0, 1.0, 7).unwrap();
    let b = synth_event(0, 1.0, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synth_event(0, 1.0, 8).unwrap());
}

#[test]
fn synth_event_length_contract() {
    assert_eq!(synth_event(3, 0.5, 1).unwrap().len(), 16_000);
    assert!(synth_event(3, 0.0, 1).is_err());
    assert!(synth_event(3, -1.0, 1).is_err());
    assert!(synth_event(N_SYNTH_CLASSES, 1.0, 1).is_err());
}

#[test]
fn synth_event_peak_inside_class_band() {
    for k in 0..N_SYNTH_CLASSES {
        let (lo, hi) = class_band(k);
        for seed in [1, 2, 3] {
            let w = synth_event(k, 1.0, seed).unwrap();
            let f = peak_frequency(&w, 4096).unwrap();
            let bin = 32_000.0 / 4096.0;
            assert!(f >= lo - bin && f <= hi + bin, "class {k} seed {seed}: peak {f} outside {lo}..{hi}");
        }
    }
}

#[test]
fn class_bands_are_disjoint_and_ordered() {
    for k in 1..N_SYNTH_CLASSES {
        assert!(class_band(k - 1).1 < class_band(k).0);
    }
    assert!(class_band(N_SYNTH_CLASSES - 1).1 < 16_000.0);
}

#[test]
fn empty_scene_is_background() {
    let (s, w) = build_scene("s", &[], 11, 2.0).unwrap();
    assert!(s.events.is_empty());
    assert_eq!(w, background(64_000, 11));
    assert!((w.rms() - BACKGROUND_RMS).abs() < 1e-12);
}

#[test]
fn scene_labels_pass_through() {
    let spec = [
        EventSpec { class_id: 1, onset: 0.5, duration: 1.0, snr_db: 6.0 },
        EventSpec { class_id: 4, onset: 2.0, duration: 0.25, snr_db: 0.0 },
        EventSpec { class_id: 1, onset: 1.0, duration: 2.0, snr_db: 6.0 },
    ];
    let (s, w) = build_scene("x", &spec, 3, 4.0).unwrap();
    assert_eq!(w.len(), 128_000);
    assert_eq!(s.events.len(), 3);
    for (e, sp) in s.events.iter().zip(&spec) {
        assert_eq!(e.class_id, sp.class_id);
        assert_eq!(e.onset, sp.onset);
        assert!((e.offset - (sp.onset + sp.duration)).abs() < 1e-12);
    }
}

#[test]
fn loud_event_raises_rms_inside_its_span() {
    let spec = [EventSpec { class_id: 6, onset: 1.0, duration: 1.0, snr_db: 12.0 }];
    let (_, w) = build_scene("x", &spec, 5, 3.0).unwrap();
    let x = w.samples();
    let inside = rms(&x[32_000..64_000]);
    let outside = rms(&[&x[..32_000], &x[64_000..]].concat());
    assert!(inside > 2.0 * outside, "inside {inside} outside {outside}");
}

#[test]
fn event_past_scene_end_is_rejected() {
    let spec = [EventSpec { class_id: 0, onset: 9.5, duration: 1.0, snr_db: 6.0 }];
    assert!(build_scene("x", &spec, 1, 10.0).is_err());
    let spec = [EventSpec { class_id: 0, onset: -0.1, duration: 1.0, snr_db: 6.0 }];
    assert!(build_scene("x", &spec, 1, 10.0).is_err());
}

#[test]
fn frame_targets_center_rule() {
    let s = scene("a", &[(0.0, 1.0, 3)]);
    let t = frame_targets_for(&s, 3, 50, 0.04);
    assert!(t[..25].iter().all(|&v| v == 1));
    assert!(t[25..].iter().all(|&v| v == 0));
    assert!(frame_targets_for(&s, 2, 50, 0.04).iter().all(|&v| v == 0));
    let full = scene("b", &[(0.0, 10.0, 1)]);
    assert!(frame_targets_for(&full, 1, 250, 0.04).iter().all(|&v| v == 1));
}

#[test]
fn strong_pairs_one_per_distinct_class() {
    let scenes = [scene("s", &[(0.0, 1.0, 2), (2.0, 3.0, 5), (4.0, 5.0, 2)])];
    let m = build_pairs(&scenes, &ref_bank(3), &names(), &opts(Mode::Strong, 1), &grid()).unwrap();
    assert_eq!(m.pairs.len(), 2);
    assert_eq!(m.pairs.iter().map(|p| p.target_class).collect::<Vec<_>>(), vec![2, 5]);
    assert!(m.pairs.iter().all(|p| p.polarity == Polarity::Positive));
    for p in &m.pairs {
        assert_eq!(p.frame_targets.len(), 251);
        assert!(p.ref_id.starts_with(&format!("r{}_", p.target_class)));
    }
}

#[test]
fn missing_reference_class_is_rejected() {
    let mut refs = ref_bank(1);
    refs.retain(|r| r.class_id != 4);
    let scenes = [scene("s", &[(0.0, 1.0, 2)])];
    assert!(build_pairs(&scenes, &refs, &names(), &opts(Mode::Strong, 1), &grid()).is_err());
}

#[test]
fn scene_with_every_class_gets_no_negative() {
    let all: Vec<(f64, f64, usize)> = (0..N_SYNTH_CLASSES).map(|c| (c as f64 * 0.5, c as f64 * 0.5 + 0.5, c)).collect();
    let scenes = [scene("full", &all), scene("one", &[(0.0, 1.0, 0)])];
    let strong = build_pairs(&scenes, &ref_bank(2), &names(), &opts(Mode::Strong, 3), &grid()).unwrap();
    let plus = build_pairs(&scenes, &ref_bank(2), &names(), &opts(Mode::StrongPlus, 3), &grid()).unwrap();
    assert_eq!(strong.pairs.len(), 11);
    assert_eq!(plus.pairs.len(), 12);
    assert_eq!(plus.n_negative(), 1);
}

#[test]
fn summary_mirrors_two_column_layout() {
    let mut counts = BTreeMap::new();
    counts.insert((Split::Train, Mode::Strong), 23_106);
    counts.insert((Split::Train, Mode::StrongPlus), 29_106);
    counts.insert((Split::Val, Mode::Strong), 7_681);
    counts.insert((Split::Val, Mode::StrongPlus), 9_681);
    counts.insert((Split::Test, Mode::Strong), 7_702);
    counts.insert((Split::Test, Mode::StrongPlus), 9_702);
    let t = summary_table(&counts);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("Type") && lines[0].contains("Strong+"));
    assert!(lines[1].starts_with("Training") && lines[1].ends_with("23106    29106"));
    assert!(lines[3].starts_with("Test"));
}

#[test]
fn split_and_mode_parse_round_trip() {
    for s in Split::ALL {
        assert_eq!(s.name().parse::<Split>().unwrap(), s);
    }
    for m in Mode::ALL {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
    }
    assert!("dev".parse::<Split>().is_err());
}

#[test]
fn derive_seed_depends_on_every_tag() {
    assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
    assert_eq!(derive_seed(9, &[4, 5]), derive_seed(9, &[4, 5]));
}

#[test]
fn annotation_parse_contract() {
    let p = Path::new("a.txt");
    let ev = parse_annotations("0.0\t2.0\tdog_bark\n", p, &names()).unwrap();
    assert_eq!(ev, vec![EventLabel { onset: 0.0, offset: 2.0, class_id: 3 }]);
    assert!(parse_annotations("", p, &names()).unwrap().is_empty());
    assert!(parse_annotations("\n\n", p, &names()).unwrap().is_empty());
}

#[test]
fn annotation_errors_name_file_and_line() {
    let p = Path::new("clip7.txt");
    let e = parse_annotations("0.0\t1.0\tsiren\n3.0\t2.0\tsiren\n", p, &names()).unwrap_err();
    assert!(matches!(e, TsdError::Annotation { line: 2, .. }), "{e}");
    assert!(e.to_string().starts_with("clip7.txt:2:"));
    let e = parse_annotations("0.0\t1.0\twhale\n", p, &names()).unwrap_err();
    assert!(matches!(e, TsdError::UnknownClass { line: 1, .. }));
    assert!(e.to_string().contains("whale") && e.to_string().contains("clip7.txt"));
    assert!(parse_annotations("0.0 1.0 siren\n", p, &names()).is_err());
}

#[test]
fn annotation_write_read_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.txt");
    let events = vec![
        EventLabel { onset: 0.125, offset: 1.5, class_id: 9 },
        EventLabel { onset: 2.0, offset: 2.0 + 1.0 / 3.0, class_id: 0 },
    ];
    write_annotations(&p, &events, &names()).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("0.125\t1.500\tstreet_music\n"));
    assert_eq!(read_annotations(&p, &names()).unwrap(), events);
}

#[test]
fn ingest_external_reads_sidecars_and_wav_durations() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann");
    let audio = dir.path().join("audio");
    std::fs::create_dir_all(&ann).unwrap();
    std::fs::create_dir_all(&audio).unwrap();
    std::fs::write(ann.join("b.txt"), "").unwrap();
    std::fs::write(ann.join("a.txt"), "0.5\t1.0\tgun_shot\n1.2\t3.02\tsiren\n").unwrap();
    std::fs::write(ann.join("notes.md"), "ignored").unwrap();
    for id in ["a", "b"] {
        write_wav(audio.join(format!("{id}.wav")), &Waveform::silence(48_000, 16_000)).unwrap();
    }
    let scenes = ingest_external(&ann, &audio, &names()).unwrap();
    assert_eq!(scenes.len(), 2);
    assert_eq!(scenes[0].scene_id, "a");
    assert_eq!(scenes[0].duration, 3.0);
    assert_eq!(scenes[0].events[1].offset, 3.0);
    assert_eq!(scenes[0].classes(), vec![6, 8]);
    assert!(scenes[1].events.is_empty());

    std::fs::write(ann.join("c.txt"), "0.5\t9.0\tsiren\n").unwrap();
    write_wav(audio.join("c.wav"), &Waveform::silence(48_000, 16_000)).unwrap();
    assert!(ingest_external(&ann, &audio, &names()).is_err());
}

fn tiny_corpus() -> CorpusConfig {
    CorpusConfig {
        n_scenes: 6,
        val_fraction: 0.2,
        test_fraction: 0.2,
        scene_duration: 2.0,
        min_events: 1,
        max_events: 3,
        min_event_duration: 0.3,
        max_event_duration: 1.0,
        refs_per_class: 1,
        ref_duration: 0.5,
        ..Default::default()
    }
}

#[test]
fn generated_scenes_respect_config() {
    let cfg = tiny_corpus();
    let splits = generate_corpus(&cfg, 5).unwrap();
    assert_eq!(splits.iter().map(|s| s.scenes.len()).collect::<Vec<_>>(), vec![4, 1, 1]);
    for gs in &splits {
        assert_eq!(gs.refs.len(), N_SYNTH_CLASSES);
        for (s, w) in gs.scenes.iter().zip(&gs.scene_audio) {
            assert_eq!(w.len(), 64_000);
            assert!((1..=3).contains(&s.events.len()));
            for e in &s.events {
                assert!(0.0 <= e.onset && e.onset < e.offset && e.offset <= s.duration);
                assert_eq!((e.onset * 1000.0).round() / 1000.0, e.onset);
                assert_eq!((e.offset * 1000.0).round() / 1000.0, e.offset);
            }
        }
    }
    let empty = CorpusConfig { n_scenes: 0, ..cfg };
    assert_eq!(generate_corpus(&empty, 5).unwrap_err().to_string(), "empty dataset");
}

fn dir_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn dataset_dir_is_byte_deterministic_and_loads_back() {
    let cfg = tiny_corpus();
    let g = grid();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let splits = generate_corpus(&cfg, 21).unwrap();
    DatasetDir::write(a.path(), &splits, &cfg, 21, &g).unwrap();
    DatasetDir::write(b.path(), &generate_corpus(&cfg, 21).unwrap(), &cfg, 21, &g).unwrap();
    let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert!(fa.contains_key("manifests/train_strong_plus.jsonl"));
    assert!(fa.contains_key("annotations/test/test_00000.txt"));
    assert_eq!(fa, fb);

    let ds = DatasetDir::open(a.path()).unwrap();
    for gs in &splits {
        for mode in Mode::ALL {
            let loaded = ds.load_split(gs.split, mode, &g).unwrap();
            let mem = gs.manifest(mode, 1, 21, &g).unwrap();
            assert_eq!(loaded.manifest, mem);
            for s in &gs.scenes {
                assert_eq!(loaded.scenes[&s.scene_id].events, s.events);
            }
        }
    }
    let summary = std::fs::read_to_string(a.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("Type"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_invariants(
        layouts in prop::collection::vec(prop::collection::vec((0usize..10, 0u32..90, 1u32..10), 1..9), 1..12),
        seed in any::<u64>(),
    ) {
        let scenes: Vec<Scene> = layouts
            .iter()
            .enumerate()
            .map(|(i, evs)| {
                let ev: Vec<(f64, f64, usize)> = evs
                    .iter()
                    .map(|&(c, on, d)| (on as f64 / 10.0, ((on + d).min(100)) as f64 / 10.0, c))
                    .collect();
                scene(&format!("s{i}"), &ev)
            })
            .collect();
        let refs = ref_bank(2);
        let strong = build_pairs(&scenes, &refs, &names(), &opts(Mode::Strong, seed), &grid()).unwrap();
        let plus = build_pairs(&scenes, &refs, &names(), &opts(Mode::StrongPlus, seed), &grid()).unwrap();
        let with_absent = scenes.iter().filter(|s| s.classes().len() < N_SYNTH_CLASSES).count();
        prop_assert_eq!(plus.pairs.len(), strong.pairs.len() + with_absent);
        let expected_pos: usize = scenes.iter().map(|s| s.classes().len()).sum();
        prop_assert_eq!(strong.pairs.len(), expected_pos);
        let by_id: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
        for p in &plus.pairs {
            let s = by_id[p.scene_id.as_str()];
            prop_assert_eq!(p.polarity == Polarity::Positive, s.has_class(p.target_class));
            if p.polarity == Polarity::Negative {
                prop_assert!(p.frame_targets.iter().all(|&v| v == 0));
            }
        }
        let positives: Vec<&PairSample> = plus.pairs.iter().filter(|p| p.polarity == Polarity::Positive).collect();
        prop_assert_eq!(positives, strong.pairs.iter().collect::<Vec<_>>());
        let again = build_pairs(&scenes, &refs, &names(), &opts(Mode::StrongPlus, seed), &grid()).unwrap();
        prop_assert_eq!(again, plus);
    }

    #[test]
    fn frame_targets_recover_events_within_one_hop(on_ms in 0u32..9000, len_ms in 100u32..1000) {
        let on = on_ms as f64 / 1000.0;
        let off = ((on_ms + len_ms).min(10_000)) as f64 / 1000.0;
        let s = scene("r", &[(on, off, 4)]);
        let hop = 0.04;
        let t = frame_targets_for(&s, 4, 250, hop);
        let first = t.iter().position(|&v| v == 1).unwrap();
        let last = t.iter().rposition(|&v| v == 1).unwrap();
        prop_assert!(t[first..=last].iter().all(|&v| v == 1));
        prop_assert!((first as f64 * hop - on).abs() <= hop + 1e-9);
        prop_assert!(((last + 1) as f64 * hop - off).abs() <= hop + 1e-9);
    }
}
