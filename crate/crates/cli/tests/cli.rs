use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5

[signal]
n_mels = 32

[scenegen]
n_scenes = 6
scene_duration = 2.0
max_events = 2
refs_per_class = 1

[model.encoder]
n_mels = 32
stem_kernel = [2, 4]
stage_dims = [8, 16]
stage_depths = [1, 1]
downsample = [[2, 2]]
dw_kernel = 5

[fusion]
projected_dim = 16
attention_heads = 2
proj_kernel = 1

[train]
epochs = 1
batch_size = 4
lr = 0.001
"#;

fn tsdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdet"))
        .args(args)
        .env_remove("TSDET_RUN_ROOT")
        .output()
        .expect("spawn tsdet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let config = root.join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let data = root.join("data");
    ok(tsdet(&["-q", "build-dataset", "-c", s(&config), "-o", s(&data)]));
    Fixture {
        _tmp: tmp,
        root,
        config,
        data,
    }
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                // the snapshot records the output path
                if rel != "config.toml" {
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn build_dataset_is_reproducible_and_guarded() {
    let f = fixture();
    for sub in ["manifests", "annotations", "audio"] {
        assert!(f.data.join(sub).is_dir(), "missing {sub}");
    }
    assert!(f.data.join("config.toml").exists());

    let again = f.root.join("again");
    let out = ok(tsdet(&["build-dataset", "-c", s(&f.config), "-o", s(&again)]));
    assert!(!out.trim().is_empty(), "summary expected on stdout");
    assert_eq!(tree(&f.data), tree(&again));

    let o = tsdet(&["build-dataset", "-c", s(&f.config), "-o", s(&again)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    ok(tsdet(&["-q", "build-dataset", "-c", s(&f.config), "-o", s(&again), "--force"]));

    let o = tsdet(&["build-dataset", "-c", s(&f.config), "-o", s(&f.root.join("empty")), "--scenes", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty dataset"));
}

#[test]
fn seed_is_required_without_a_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tsdet(&["build-dataset", "-o", s(&tmp.path().join("d"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
    let o = tsdet(&["train", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_evaluate_predict() {
    let f = fixture();
    let run = f.root.join("run");
    let out = ok(tsdet(&[
        "train", "-c", s(&f.config), "-d", s(&f.data), "-o", s(&run), "--fusion", "film",
    ]));
    assert!(out.contains("best epoch"));
    for name in ["config.toml", "metrics.jsonl", "best.ckpt.json", "last.ckpt.json"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let snapshot = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("film"));
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);

    let ckpt = run.join("best.ckpt.json");
    let report = f.root.join("report");
    ok(tsdet(&[
        "evaluate", "--checkpoint", s(&ckpt), "-d", s(&f.data), "--threshold", "0.5", "-o", s(&report), "--plots",
    ]));
    for name in ["report.txt", "classes.jsonl", "pairs.jsonl", "f1_per_class.svg"] {
        assert!(report.join(name).exists(), "missing {name}");
    }
    let has_localization = std::fs::read_dir(&report)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().starts_with("localization_"));
    assert!(has_localization);

    let o = tsdet(&["evaluate", "--checkpoint", s(&ckpt), "-d", s(&f.data), "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(1));

    let wav = |kind: &str| {
        let dir = f.data.join("audio/test").join(kind);
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        v.sort();
        v.remove(0)
    };
    let (mix, reference) = (wav("scenes"), wav("refs"));
    let plot = f.root.join("loc.svg");
    let out = ok(tsdet(&[
        "predict", "--checkpoint", s(&ckpt), "--mixture", s(&mix), "--reference", s(&reference), "--json", "--plot",
        s(&plot),
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["events"].is_array());
    assert!(!v["frame_probs"].as_array().unwrap().is_empty());
    assert!(std::fs::read_to_string(&plot).unwrap().starts_with("<svg"));

    let out = ok(tsdet(&["predict", "--checkpoint", s(&ckpt), "--mixture", s(&mix), "--reference", s(&reference)]));
    assert!(out.contains("reference class"));
}

#[test]
fn ablate_dry_run_lists_the_grid() {
    let f = fixture();
    let out = ok(tsdet(&["ablate", "-c", s(&f.config), "-d", s(&f.data), "--dry-run"]));
    let rows = out.lines().filter(|l| l.contains("parameters")).count();
    assert_eq!(rows, 6, "{out}");
    let out = ok(tsdet(&[
        "ablate", "-c", s(&f.config), "-d", s(&f.data), "--dry-run", "--fusions", "film,film", "--encoders", "dual",
    ]));
    assert_eq!(out.lines().filter(|l| l.contains("parameters")).count(), 1);
}
