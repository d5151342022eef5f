use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use entri_core::classifier::TrainReport;
use entri_core::dataset::{write_json, Dataset, MANIFEST};
use entri_core::ensemble::{
    evaluate, stack, train_ensemble, AlphaTrial, EnsembleModel, LevelSet, Metrics, SubModelSet,
};
use entri_core::scene::{Level, Split};
use entri_core::submodel::InputSignature;
use entri_core::vteg::explain_scene;
use entri_core::vteg::render::{check_grammar, write_explanation};
use entri_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::recorded::{ingest_recorded, RecordedProviderBundle};
use crate::{Command, DirLock, CLI};

pub const BUNDLE_CONFIG: &str = "config.toml";
pub const TRAIN_LOG: &str = "train_log.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const EXPLANATIONS_DIR: &str = "explanations";
pub const INGESTED_DIR: &str = "ingested_dataset";

/// The k values reported by `train`, `eval` and `ablate`.
pub const REPORTED_KS: [usize; 3] = [1, 2, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub alpha: f64,
    pub trials: Vec<AlphaTrial>,
    pub validation_accuracies: BTreeMap<Level, Vec<f64>>,
    pub reports: BTreeMap<Level, Vec<TrainReport>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMetrics {
    pub validation: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub case: usize,
    pub levels: String,
    #[serde(rename = "top@1")]
    pub top1: f64,
    #[serde(rename = "top@2")]
    pub top2: f64,
    #[serde(rename = "top@5")]
    pub top5: f64,
}

fn write_out(out: &mut (dyn Write + Send), text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        write_out($out, format_args!("{}\n", format_args!($($arg)*)))
    };
}

pub fn dispatch(command: Command, out: &mut (dyn Write + Send)) -> Result<()> {
    match command {
        Command::Generate { config } => generate(&EngineConfig::load(&config)?, out).map(|_| ()),
        Command::Train { config, out: dir } => {
            let cfg = EngineConfig::load(&config)?;
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            train(&cfg, &dir, out).map(|_| ())
        }
        Command::Eval { bundle, split } => {
            let split = Split::parse(&split)
                .ok_or_else(|| Error::config(CLI, format!("unknown split '{split}' (train, validation, test)")))?;
            eval(&bundle, split, out).map(|_| ())
        }
        Command::Ablate { bundle } => ablate(&bundle, out).map(|_| ()),
        Command::Explain { bundle, scenes, out: dir } => {
            let dir = dir.unwrap_or_else(|| bundle.join(EXPLANATIONS_DIR));
            explain(&bundle, &scenes, &dir, out).map(|_| ())
        }
        Command::Ingest { bundle, recorded, out: dir } => {
            let dir = dir.unwrap_or_else(|| bundle.join(INGESTED_DIR));
            ingest(&bundle, &recorded, &dir, out).map(|_| ())
        }
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

/// k values to evaluate for `n` categories.
fn ks_for(n: usize) -> Vec<usize> {
    REPORTED_KS.iter().copied().filter(|&k| k <= n).collect()
}

/// Top@k, reading values above the category count as 1.
fn top_or_one(m: &Metrics, k: usize) -> f64 {
    m.top_k.get(&k).copied().unwrap_or(1.0)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.join(MANIFEST).is_file() {
        return Err(Error::data(CLI, format!("no dataset at {} (run generate first)", path.display())));
    }
    Dataset::load(path)
}

fn split_scenes(data: &Dataset, split: Split) -> Result<Vec<&entri_core::scene::SceneInstance>> {
    let scenes = data.split(split);
    if scenes.is_empty() {
        return Err(Error::data(CLI, format!("{} split of the dataset is empty", split_name(split))));
    }
    Ok(scenes)
}

fn print_metrics(out: &mut (dyn Write + Send), label: &str, m: &Metrics) -> Result<()> {
    let tops: Vec<String> = m.top_k.iter().map(|(k, v)| format!("Top@{k} {:.4}", v)).collect();
    say!(out, "{label} ({} scenes): {}", m.n_scenes, tops.join(", "))
}

pub fn generate(cfg: &EngineConfig, out: &mut (dyn Write + Send)) -> Result<Dataset> {
    let (world, n, split) = cfg.synthetic()?;
    let data = Dataset::synthetic(&world, n, split)?;
    let _lock = DirLock::acquire(&cfg.dataset.path)?;
    data.save(&cfg.dataset.path)?;
    say!(out, "dataset written to {}", cfg.dataset.path.display())?;
    say!(out, "categories ({}): {}", data.n_categories(), data.categories.join(", "))?;
    for p in &data.registry.segmentation {
        say!(out, "segmentation provider {}: {} classes", p.name, p.class_names.len())?;
    }
    for p in &data.registry.detection {
        say!(out, "detection provider {}: vocabulary of {}", p.name, p.vocabulary.len())?;
    }
    let counts: Vec<String> = [Split::Train, Split::Validation, Split::Test]
        .iter()
        .map(|&s| format!("{} {}", split_name(s), data.split(s).len()))
        .collect();
    say!(out, "scenes: {} ({})", data.scenes.len(), counts.join(", "))?;
    Ok(data)
}

pub fn train(cfg: &EngineConfig, dir: &Path, out: &mut (dyn Write + Send)) -> Result<BundleMetrics> {
    let data = load_dataset(&cfg.dataset.path)?;
    let _lock = DirLock::acquire(dir)?;
    let (model, subs) = train_ensemble(&data, &cfg.ensemble)?;
    model.save(dir)?;

    let mut saved = cfg.clone();
    saved.dataset.path = std::fs::canonicalize(&cfg.dataset.path).map_err(|e| Error::io(&cfg.dataset.path, e))?;
    saved.output_dir = dir.to_path_buf();
    saved.save(&dir.join(BUNDLE_CONFIG))?;
    write_json(
        &dir.join(TRAIN_LOG),
        &TrainLog {
            alpha: model.alpha,
            trials: model.trials.clone(),
            validation_accuracies: model.accuracies.clone(),
            reports: subs.reports,
        },
    )?;

    let ks = ks_for(model.n_categories());
    let metrics = BundleMetrics {
        validation: evaluate(&model, &split_scenes(&data, Split::Validation)?, &ks)?,
        test: evaluate(&model, &split_scenes(&data, Split::Test)?, &ks)?,
    };
    write_json(&dir.join(METRICS_FILE), &metrics)?;

    say!(out, "bundle written to {}", dir.display())?;
    for (level, accs) in &model.accuracies {
        let a: Vec<String> = accs.iter().map(|a| format!("{a:.4}")).collect();
        say!(out, "{level} discriminator validation accuracies: {}", a.join(", "))?;
    }
    say!(out, "alpha {}", model.alpha)?;
    print_metrics(out, "validation", &metrics.validation)?;
    print_metrics(out, "test", &metrics.test)?;
    Ok(metrics)
}

/// A trained bundle with the config and dataset it was trained on.
pub struct LoadedBundle {
    pub model: EnsembleModel,
    pub config: EngineConfig,
    pub data: Dataset,
}

pub fn load_bundle(dir: &Path) -> Result<LoadedBundle> {
    let config = EngineConfig::load(&dir.join(BUNDLE_CONFIG))?;
    let model = EnsembleModel::load(dir)?;
    let data = load_dataset(&config.dataset.path)?;
    if data.categories != model.categories {
        return Err(Error::data(CLI, format!("{}: dataset categories differ from the bundle's", config.dataset.path.display())));
    }
    Ok(LoadedBundle { model, config, data })
}

pub fn eval(bundle: &Path, split: Split, out: &mut (dyn Write + Send)) -> Result<Metrics> {
    let b = load_bundle(bundle)?;
    let metrics = evaluate(&b.model, &split_scenes(&b.data, split)?, &ks_for(b.model.n_categories()))?;
    let _lock = DirLock::acquire(bundle)?;
    write_json(&bundle.join(format!("eval_{}.json", split_name(split))), &metrics)?;
    print_metrics(out, split_name(split), &metrics)?;
    for row in &metrics.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:4}")).collect();
        say!(out, "{}", cells.join(""))?;
    }
    Ok(metrics)
}

pub fn ablate(bundle: &Path, out: &mut (dyn Write + Send)) -> Result<Vec<AblationRow>> {
    let b = load_bundle(bundle)?;
    if let Some(l) = Level::ALL.iter().find(|l| !b.model.submodels.contains_key(l)) {
        return Err(Error::config(CLI, format!("ablation needs sub-models of all three levels; the bundle has no {l} sub-model")));
    }
    let subs = SubModelSet {
        submodels: b.model.submodels.clone(),
        accuracies: b.model.accuracies.clone(),
        reports: BTreeMap::new(),
    };
    let test = split_scenes(&b.data, Split::Test)?;
    let ks = ks_for(b.model.n_categories());
    let mut rows = Vec::new();
    for (i, case) in LevelSet::ablation_cases().into_iter().enumerate() {
        let model = stack(&b.data, &subs, case, &b.config.ensemble.meta)?;
        let m = evaluate(&model, &test, &ks)?;
        rows.push(AblationRow {
            case: i + 1,
            levels: case.to_string(),
            top1: top_or_one(&m, 1),
            top2: top_or_one(&m, 2),
            top5: top_or_one(&m, 5),
        });
    }
    let _lock = DirLock::acquire(bundle)?;
    let path = bundle.join(ABLATION_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::data(CLI, format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::data(CLI, format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    say!(out, "case  levels          Top@1   Top@2   Top@5")?;
    for r in &rows {
        say!(out, "{:>4}  {:<14} {:.4}  {:.4}  {:.4}", r.case, r.levels, r.top1, r.top2, r.top5)?;
    }
    Ok(rows)
}

pub fn explain(bundle: &Path, ids: &[u32], dir: &Path, out: &mut (dyn Write + Send)) -> Result<Vec<PathBuf>> {
    let b = load_bundle(bundle)?;
    let scenes = ids
        .iter()
        .map(|&id| b.data.scene(id).ok_or_else(|| Error::data(CLI, format!("scene {id} is not in the dataset"))))
        .collect::<Result<Vec<_>>>()?;
    let _lock = DirLock::acquire(dir)?;
    let written = scenes
        .par_iter()
        .map(|s| {
            let e = explain_scene(&b.model, s, b.config.occlusion)?;
            check_grammar(&e.text).map_err(|err| Error::data(CLI, format!("scene {}: {err}", s.id)))?;
            let paths = write_explanation(&e, dir)?;
            Ok((s.id, e.record.final_category, paths))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all = Vec::new();
    for (id, category, paths) in written {
        say!(out, "scene {id}: {category} -> {}", paths[0].display())?;
        all.extend(paths);
    }
    Ok(all)
}

/// Levels whose sub-model cannot read the ingested scenes.
pub fn incompatible_levels(model: &EnsembleModel, data: &Dataset) -> Vec<(Level, String)> {
    let mut bad = Vec::new();
    for level in model.active.levels() {
        let sub = &model.submodels[&level];
        for s in &data.scenes {
            if s.recorded_softmax.contains_key(&level) {
                continue;
            }
            let got = InputSignature::of_scene(level, s);
            if &got != sub.signature() {
                bad.push((level, format!("scene {} has inputs {got:?}, the sub-model expects {:?}", s.id, sub.signature())));
                break;
            }
        }
    }
    bad
}

pub fn ingest(bundle: &Path, recorded: &Path, dir: &Path, out: &mut (dyn Write + Send)) -> Result<Option<Metrics>> {
    let LoadedBundle { model, data, .. } = load_bundle(bundle)?;
    let rec = RecordedProviderBundle::load(recorded)?;
    let merged = ingest_recorded(&rec, data)?;
    {
        let _lock = DirLock::acquire(dir)?;
        merged.save(dir)?;
    }
    say!(out, "ingested dataset written to {} ({} scenes)", dir.display(), merged.scenes.len())?;
    let bad = incompatible_levels(&model, &merged);
    if !bad.is_empty() {
        for (level, why) in &bad {
            say!(out, "{level}: {why}")?;
        }
        say!(out, "the bundle cannot evaluate the ingested dataset; retrain with a config pointing at {}", dir.display())?;
        return Ok(None);
    }
    let mut scenes = merged.split(Split::Test);
    if scenes.is_empty() {
        scenes = merged.scenes.iter().collect();
    }
    let metrics = evaluate(&model, &scenes, &ks_for(model.n_categories()))?;
    write_json(&dir.join("eval_test.json"), &metrics)?;
    print_metrics(out, "ingested test", &metrics)?;
    Ok(Some(metrics))
}
