use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use tsdet::config::RunConfig;
use tsdet::data::FeatureSet;
use tsdet::eval::{
    ablation_grid, evaluate, f1_bar_chart, localization_figure, postprocess, run_ablation, Detector, EvalConfig,
    LocalizationPlot,
};
use tsdet::io::{write_atomic, write_jsonl};
use tsdet::model::{load_checkpoint, TsdModel};
use tsdet::scenegen::{generate_corpus, AudioRef, DatasetDir, FrameGrid, LoadedSplit, Mode, Polarity, Split};
use tsdet::signal::{read_wav, resample, LogMelExtractor, Waveform};
use tsdet::train::{fit, unseen_class_split, AugmentConfig, FitContext};

use crate::args::{
    AblateArgs, BuildDatasetArgs, ConfigArgs, EvaluateArgs, PredictArgs, TrainArgs, TrainOverrides,
};

const DATASET_ENTRIES: &[&str] = &["audio", "annotations", "manifests", "dataset.json", "summary.txt", "config.toml"];
const RUN_ENTRIES: &[&str] = &[
    "config.toml",
    "metrics.jsonl",
    "best.ckpt.json",
    "last.ckpt.json",
    "nan_batch.json",
    "ablation.txt",
    "ablation.jsonl",
];

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    match &args.config {
        Some(path) => Ok(RunConfig::load(path, args.seed)?),
        None => {
            let seed = args
                .seed
                .context("a seed is required: pass --seed or use a config file that sets `seed`")?;
            Ok(RunConfig::preset(&args.preset, seed)?)
        }
    }
}

fn apply_overrides(cfg: &mut RunConfig, o: &TrainOverrides) -> Result<()> {
    if let Some(d) = &o.data {
        cfg.data.dir = Some(d.clone());
    }
    if let Some(m) = o.mode {
        cfg.data.mode = m;
    }
    if let Some(f) = o.fusion {
        cfg.fusion.strategy = f;
    }
    if let Some(e) = o.encoder {
        cfg.model.encoder.share_weights = e.share_weights();
    }
    if let Some(u) = &o.unseen_classes {
        cfg.data.unseen_classes = u.clone();
    }
    if let Some(n) = o.epochs {
        cfg.train.epochs = n;
    }
    if let Some(lr) = o.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.train.batch_size = b;
    }
    if o.no_augment {
        cfg.train.augment = AugmentConfig::none();
    }
    cfg.validate()?;
    Ok(())
}

/// Creates `dir`, or clears the entries this tool owns when `force` is set.
/// Anything else already in a non-empty directory makes it an error.
fn prepare_out_dir(dir: &Path, force: bool, owned: &[&str]) -> Result<()> {
    let non_empty = dir.is_dir() && std::fs::read_dir(dir)?.next().is_some();
    if dir.exists() && !dir.is_dir() {
        bail!("{} exists and is not a directory", dir.display());
    }
    if non_empty {
        if !force {
            bail!("{} is not empty (use --force to replace it)", dir.display());
        }
        for name in owned {
            let p = dir.join(name);
            if p.is_dir() {
                std::fs::remove_dir_all(&p).with_context(|| format!("removing {}", p.display()))?;
            } else if p.exists() {
                std::fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_config_snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_atomic(&dir.join("config.toml"), cfg.to_toml_string()?.as_bytes())?;
    Ok(())
}

pub fn build_dataset(args: &BuildDatasetArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    if let Some(n) = args.scenes {
        cfg.scenegen.n_scenes = n;
    }
    if cfg.scenegen.n_scenes == 0 {
        bail!("empty dataset");
    }
    cfg.validate()?;
    prepare_out_dir(&args.out, args.force, DATASET_ENTRIES)?;
    let splits = generate_corpus(&cfg.scenegen, cfg.seed)?;
    let dd = DatasetDir::write(&args.out, &splits, &cfg.scenegen, cfg.seed, &cfg.grid())?;
    cfg.data.dir = Some(args.out.clone());
    write_config_snapshot(&args.out, &cfg)?;
    log::info!("wrote dataset to {}", args.out.display());
    print!("{}", dd.info().summary());
    Ok(())
}

/// The chosen split with held-out classes removed (for training splits).
fn load_split(dd: &DatasetDir, cfg: &RunConfig, split: Split, mode: Mode, drop_unseen: bool) -> Result<LoadedSplit> {
    let mut ls = dd.load_split(split, mode, &cfg.grid())?;
    let held = cfg.data.held_out();
    if drop_unseen && !held.is_empty() {
        let (kept, _) = unseen_class_split(&ls.manifest, &ls.manifest, &held)?;
        ls.manifest = kept;
    }
    Ok(ls)
}

fn features(ls: &LoadedSplit, cfg: &RunConfig) -> Result<FeatureSet> {
    let ex = LogMelExtractor::new(cfg.signal)?;
    let set = FeatureSet::from_loaded(ls, &ex, cfg.model.encoder.time_downsample())?;
    if set.is_empty() {
        bail!("empty dataset: no {} pairs in {}", ls.manifest.mode, ls.manifest.split);
    }
    Ok(set)
}

fn open_dataset(cfg: &RunConfig) -> Result<DatasetDir> {
    let dir = cfg
        .data
        .dir
        .as_ref()
        .context("no dataset directory: pass --data or set data.dir")?;
    let dd = DatasetDir::open(dir).with_context(|| format!("opening dataset {}", dir.display()))?;
    if dd.class_names().len() != cfg.model.n_classes {
        bail!(
            "dataset has {} classes but model.n_classes is {}",
            dd.class_names().len(),
            cfg.model.n_classes
        );
    }
    Ok(dd)
}

fn default_run_name(cfg: &RunConfig) -> String {
    let design = if cfg.model.encoder.share_weights { "unified" } else { "dual" };
    let mut name = format!("{}-{}-{}-s{}", cfg.data.mode, cfg.fusion.strategy, design, cfg.seed);
    if !cfg.data.unseen_classes.is_empty() {
        let ids: Vec<String> = cfg.data.unseen_classes.iter().map(|k| k.to_string()).collect();
        name.push_str(&format!("-unseen{}", ids.join("_")));
    }
    name
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    let dd = open_dataset(&cfg)?;
    let train_set = features(&load_split(&dd, &cfg, Split::Train, cfg.data.mode, true)?, &cfg)?;
    let val_set = features(&load_split(&dd, &cfg, Split::Val, cfg.data.mode, true)?, &cfg)?;
    if args.overrides.norm_from_data {
        let (mean, std) = train_set.input_stats();
        log::info!("input standardization from training features: mean {mean:.4}, std {std:.4}");
        cfg.model.encoder.input_mean = mean;
        cfg.model.encoder.input_std = std;
    }
    let run_dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_root.join(args.name.clone().unwrap_or_else(|| default_run_name(&cfg))));
    prepare_out_dir(&run_dir, args.force, RUN_ENTRIES)?;
    write_config_snapshot(&run_dir, &cfg)?;
    log::info!(
        "training on {} pairs, validating on {} pairs; run directory {}",
        train_set.len(),
        val_set.len(),
        run_dir.display()
    );
    let ctx = FitContext {
        frontend: cfg.signal,
        eval: cfg.eval,
        run_dir: Some(&run_dir),
    };
    let out = fit(&train_set, &val_set, &cfg.model_config(), &cfg.train_config(), &ctx)?;
    println!(
        "best epoch {} validation segment F1 {:.2} %; checkpoints in {}",
        out.best_epoch,
        100.0 * out.best_val_f1,
        run_dir.display()
    );
    Ok(())
}

fn eval_config(threshold: f64, segment: f64, no_median: bool) -> Result<EvalConfig> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    if !(segment > 0.0) {
        bail!("--segment must be positive");
    }
    Ok(EvalConfig {
        threshold,
        segment_s: segment,
        median_filter: !no_median,
    })
}

fn to_rate(w: Waveform, sr: u32) -> Result<Waveform> {
    Ok(if w.sample_rate() == sr { w } else { resample(&w, sr)? })
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let eval_cfg = eval_config(args.threshold, args.segment, args.no_median)?;
    let (model, frontend, class_names) =
        load_checkpoint(&args.checkpoint, None).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let dd = DatasetDir::open(&args.data).with_context(|| format!("opening dataset {}", args.data.display()))?;
    if dd.class_names() != class_names.as_slice() {
        bail!("class list of the checkpoint does not match the dataset");
    }
    let d = model.config().encoder.time_downsample();
    let ls = dd.load_split(args.split, args.mode, &FrameGrid::new(frontend, d))?;
    let set = FeatureSet::from_loaded(&ls, &LogMelExtractor::new(frontend)?, d)?;
    if set.is_empty() {
        bail!("empty dataset: no {} pairs in {}", args.mode, args.split);
    }
    let report = evaluate(&model, &set, &eval_cfg)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let parent = args.checkpoint.parent().unwrap_or(Path::new("."));
        parent.join(format!("eval-{}-{}", args.split, args.mode))
    });
    report.write(&out)?;
    if args.plots {
        write_atomic(
            &out.join("f1_per_class.svg"),
            f1_bar_chart(&report, &format!("Segment F1 per class ({} / {})", args.split, args.mode)).as_bytes(),
        )?;
        let ex = match &args.pair {
            Some(id) => set
                .examples
                .iter()
                .find(|e| &e.pair_id == id)
                .with_context(|| format!("no pair `{id}` in this split"))?,
            None => set
                .examples
                .iter()
                .find(|e| e.polarity == Polarity::Positive)
                .unwrap_or(&set.examples[0]),
        };
        let scene = &ls.scenes[&ex.scene_id];
        let audio = match &scene.audio {
            AudioRef::File(p) => read_wav(p)?,
            AudioRef::Generated(_) => bail!("scene {} has no audio file", scene.scene_id),
        };
        let probs = model.frame_probs(&set, ex)?;
        let decoded = postprocess(&probs, &eval_cfg, set.frame_hop_s);
        let title = format!("{} / {} ({})", ex.pair_id, class_names[ex.target_class], ex.polarity);
        let svg = localization_figure(&LocalizationPlot {
            title: &title,
            samples: audio.samples(),
            sample_rate: audio.sample_rate(),
            probs: &probs,
            frame_hop_s: set.frame_hop_s,
            threshold: eval_cfg.threshold,
            reference: &ex.events,
            detected: &decoded.events,
        });
        write_atomic(&out.join(format!("localization_{}.svg", ex.pair_id)), svg.as_bytes())?;
    }
    print!("{}", report.table());
    println!("report written to {}", out.display());
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    let fusions: Vec<_> = dedup(&args.fusions);
    let encoders: Vec<_> = dedup(&args.encoders);
    let variants = ablation_grid(&fusions, &encoders);
    if variants.is_empty() {
        bail!("empty ablation grid");
    }
    if args.dry_run {
        println!("planned variants (seed {}, mode {}):", cfg.seed, cfg.data.mode);
        for v in &variants {
            let mut m = TsdModel::new(&v.apply(&cfg.model_config()), 0)?;
            println!("  {:<28}{:>10} parameters", v.label(), tsdet::nn::Module::num_params(&mut m));
        }
        return Ok(());
    }
    let dd = open_dataset(&cfg)?;
    let train_set = features(&load_split(&dd, &cfg, Split::Train, cfg.data.mode, true)?, &cfg)?;
    let val_set = features(&load_split(&dd, &cfg, Split::Val, cfg.data.mode, true)?, &cfg)?;
    let test_set = features(&load_split(&dd, &cfg, Split::Test, cfg.data.mode, false)?, &cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_root.join(format!("ablation-s{}", cfg.seed)));
    let mut owned: Vec<String> = RUN_ENTRIES.iter().map(|s| s.to_string()).collect();
    owned.extend(variants.iter().map(|v| v.label()));
    prepare_out_dir(&out, args.force, &owned.iter().map(String::as_str).collect::<Vec<_>>())?;
    write_config_snapshot(&out, &cfg)?;
    let ctx = FitContext {
        frontend: cfg.signal,
        eval: cfg.eval,
        run_dir: Some(&out),
    };
    let table = run_ablation(
        &train_set,
        &val_set,
        &test_set,
        &cfg.model_config(),
        &cfg.train_config(),
        &ctx,
        &variants,
    )?;
    write_atomic(&out.join("ablation.txt"), table.table().as_bytes())?;
    write_jsonl(&out.join("ablation.jsonl"), &table.rows)?;
    print!("{}", table.table());
    Ok(())
}

fn dedup<T: Copy + PartialEq>(v: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let eval_cfg = eval_config(args.threshold, tsdet::eval::DEFAULT_SEGMENT_S, args.no_median)?;
    let (model, frontend, class_names) =
        load_checkpoint(&args.checkpoint, None).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let ex = LogMelExtractor::new(frontend)?;
    let read = |p: &PathBuf| -> Result<Waveform> {
        let w = read_wav(p).with_context(|| format!("reading {}", p.display()))?;
        to_rate(w, frontend.sample_rate)
    };
    let mix_audio = read(&args.mixture)?;
    let mix = ex.compute(&mix_audio)?;
    let reference = ex.compute(&read(&args.reference)?)?;
    let out = model.predict(&mix, &reference)?;
    let probs = &out.detection.probs;
    let decoded = postprocess(probs, &eval_cfg, out.frame_hop_s);
    let tag = out.tag.predicted_class();
    let tag_p = out.tag.softmax()[tag];
    let events: Vec<serde_json::Value> = decoded
        .events
        .iter()
        .map(|&(on, off)| {
            let (a, b) = ((on / out.frame_hop_s).round() as usize, (off / out.frame_hop_s).round() as usize);
            let span = &probs[a.min(probs.len())..b.min(probs.len())];
            let conf = span.iter().sum::<f64>() / span.len().max(1) as f64;
            json!({
                "onset": on,
                "offset": off.min(mix_audio.duration()),
                "confidence": conf,
                "max_prob": span.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect();
    if args.json {
        let body = json!({
            "reference_class": class_names[tag],
            "reference_class_prob": tag_p,
            "threshold": eval_cfg.threshold,
            "frame_hop_s": out.frame_hop_s,
            "events": events,
            "frame_probs": probs,
        });
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else {
        println!("reference class: {} (p = {:.3})", class_names[tag], tag_p);
        if events.is_empty() {
            println!("no events above threshold {}", eval_cfg.threshold);
        }
        println!("onset\toffset\tconfidence");
        for e in &events {
            println!(
                "{:.3}\t{:.3}\t{:.3}",
                e["onset"].as_f64().unwrap_or_default(),
                e["offset"].as_f64().unwrap_or_default(),
                e["confidence"].as_f64().unwrap_or_default()
            );
        }
    }
    if let Some(path) = &args.plot {
        let title = format!("{} in {}", class_names[tag], args.mixture.display());
        let svg = localization_figure(&LocalizationPlot {
            title: &title,
            samples: mix_audio.samples(),
            sample_rate: mix_audio.sample_rate(),
            probs,
            frame_hop_s: out.frame_hop_s,
            threshold: eval_cfg.threshold,
            reference: &[],
            detected: &decoded.events,
        });
        write_atomic(path, svg.as_bytes())?;
    }
    Ok(())
}
