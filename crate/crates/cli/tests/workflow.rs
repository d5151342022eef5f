use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use entri_cli::commands::{BundleMetrics, TrainLog, ABLATION_FILE, METRICS_FILE, TRAIN_LOG};
use entri_cli::config::EngineConfig;
use entri_cli::recorded::{MergeMode, RecordedManifest, RecordedProviderBundle, RecordedScene};
use entri_core::classifier::TrainParams;
use entri_core::dataset::{read_json, seg_file, Dataset, Manifest, MANIFEST};
use entri_core::ensemble::{evaluate, EnsembleModel, Metrics};
use entri_core::scene::{Level, Split};
use entri_core::submodel::Architecture;
use entri_core::vteg::ExplanationRecord;
use entri_core::world::small_world;
use sha2::{Digest, Sha256};

fn entri(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_entri"));
    cmd.args(args).env_remove("ENTRI_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_config(root: &Path) -> EngineConfig {
    let mut cfg = EngineConfig::reference();
    let synth = cfg.dataset.synthetic.as_mut().unwrap();
    synth.world = small_world(4, 24);
    synth.n_per_category = 10;
    cfg.dataset.path = root.join("dataset");
    cfg.output_dir = root.join("bundle");
    for (i, level) in [&mut cfg.ensemble.low, &mut cfg.ensemble.mid, &mut cfg.ensemble.high].into_iter().enumerate() {
        let seed = 10 * i as u64;
        level.architectures = vec![Architecture { hidden: vec![8], seed }, Architecture { hidden: vec![12], seed: seed + 1 }];
        level.train.epochs = 15;
    }
    cfg.ensemble.meta.train.epochs = 40;
    cfg
}

fn write_config(root: &Path, cfg: &EngineConfig) -> PathBuf {
    std::fs::create_dir_all(root).unwrap();
    let path = root.join("config.toml");
    cfg.save(&path).unwrap();
    path
}

fn fresh(name: &str) -> PathBuf {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    root
}

fn digest(dir: &Path) -> String {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&p).unwrap());
    }
    hex::encode(h.finalize())
}

/// One trained bundle shared by the tests of this file.
fn bundle() -> &'static (PathBuf, PathBuf) {
    static BUNDLE: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let root = fresh("workflow_bundle");
        let cfg = small_config(&root);
        let config = write_config(&root, &cfg);
        ok(&entri(&["generate", "--config", config.to_str().unwrap()], &[]));
        let bundle = root.join("bundle");
        ok(&entri(&["train", "--config", config.to_str().unwrap(), "--out", bundle.to_str().unwrap()], &[]));
        (bundle, cfg.dataset.path)
    })
}

#[test]
fn generate_is_deterministic_and_summarized() {
    let root = fresh("generate");
    let cfg = small_config(&root);
    let config = write_config(&root, &cfg);
    let stdout = ok(&entri(&["generate", "--config", config.to_str().unwrap()], &[]));
    assert!(stdout.contains("categories (4)"), "{stdout}");
    let first = digest(&cfg.dataset.path);
    ok(&entri(&["generate", "--config", config.to_str().unwrap()], &[("ENTRI_THREADS", "1")]));
    assert_eq!(digest(&cfg.dataset.path), first);

    let manifest: Manifest = read_json(&cfg.dataset.path.join(MANIFEST)).unwrap();
    assert_eq!(manifest.categories.len(), 4);
    assert_eq!(manifest.providers.segmentation.len(), 2);
    assert_eq!(manifest.providers.detection.len(), 2);
    assert_eq!(manifest.scenes.len(), 4 * 10);
}

#[test]
fn config_errors_exit_2() {
    let root = fresh("config_errors");
    assert_eq!(code(&entri(&["train", "--config", root.join("missing.toml").to_str().unwrap()], &[])), 2);

    let text = small_config(&root).to_toml().unwrap().replacen("output_dir", "output_directory", 1);
    let bad = root.join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let out = entri(&["generate", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pipeline-cli"));

    let good = write_config(&root, &small_config(&root));
    assert_eq!(code(&entri(&["generate", "--config", good.to_str().unwrap()], &[("ENTRI_THREADS", "0")])), 2);
    assert_eq!(code(&entri(&["generate"], &[])), 2);
    assert_eq!(code(&entri(&["eval", "--bundle", root.to_str().unwrap(), "--split", "holdout"], &[])), 2);
}

#[test]
fn data_and_numeric_errors() {
    let root = fresh("data_errors");
    let cfg = small_config(&root);
    let config = write_config(&root, &cfg);
    let out = entri(&["train", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run generate first"));

    ok(&entri(&["generate", "--config", config.to_str().unwrap()], &[]));
    let mut blowup = cfg.clone();
    blowup.ensemble.low.train = TrainParams { learning_rate: f64::MAX, ..blowup.ensemble.low.train };
    let config = write_config(&root.join("blowup"), &blowup);
    let out = entri(&["train", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_ablate() {
    let (bundle, data_dir) = bundle();
    let log: TrainLog = read_json(&bundle.join(TRAIN_LOG)).unwrap();
    assert_eq!(log.validation_accuracies.values().map(Vec::len).sum::<usize>(), 6);
    assert!(log.trials.iter().any(|t| t.alpha == log.alpha));

    // the bundle reproduces the recorded validation metrics
    let recorded: BundleMetrics = read_json(&bundle.join(METRICS_FILE)).unwrap();
    let model = EnsembleModel::load(bundle).unwrap();
    let data = Dataset::load(data_dir).unwrap();
    let again = evaluate(&model, &data.split(Split::Validation), &[1, 2, 4]).unwrap();
    assert_eq!(again.top(1), recorded.validation.top(1));
    assert_eq!(again.confusion, recorded.validation.confusion);

    let stdout = ok(&entri(&["eval", "--bundle", bundle.to_str().unwrap(), "--split", "test"], &[]));
    assert!(stdout.starts_with("test ("), "{stdout}");
    let eval: Metrics = read_json(&bundle.join("eval_test.json")).unwrap();
    assert_eq!(eval, recorded.test);

    let ablation_dir = fresh("ablate_bundle");
    for e in std::fs::read_dir(bundle).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, ablation_dir.join(p.file_name().unwrap())).unwrap();
        }
    }
    ok(&entri(&["ablate", "--bundle", ablation_dir.to_str().unwrap()], &[]));
    let csv = std::fs::read_to_string(ablation_dir.join(ABLATION_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,levels,top@1,top@2,top@5");
    assert_eq!(lines.len(), 8);
    assert!(lines[7].starts_with("7,low+mid+high,"));
    for row in &lines[1..] {
        let v: Vec<f64> = row.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(v[0] <= v[1] && v[1] <= v[2], "{row}");
    }
}

#[test]
fn explain_writes_five_artifacts_per_scene() {
    let (bundle, _) = bundle();
    let out_dir = fresh("explain");
    let stdout = ok(&entri(
        &["explain", "--bundle", bundle.to_str().unwrap(), "--scenes", "3,17", "--out", out_dir.to_str().unwrap()],
        &[],
    ));
    assert_eq!(stdout.lines().count(), 2);
    let files: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.len(), 10, "{files:?}");
    for id in ["00003", "00017"] {
        assert_eq!(files.iter().filter(|f| f.contains(id)).count(), 5);
    }
    let record: ExplanationRecord = read_json(&out_dir.join("explanation_00003.json")).unwrap();
    assert_eq!(record.levels.len(), 3);
    assert!(record.levels.iter().all(|l| (0.0..=100.0).contains(&l.agreement)));

    let out = entri(&["explain", "--bundle", bundle.to_str().unwrap(), "--scenes", "3,4000"], &[]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene 4000"));
}

fn recorded_from(data: &Dataset, softmax: Option<(Level, Vec<Vec<f64>>)>) -> RecordedProviderBundle {
    RecordedProviderBundle {
        manifest: RecordedManifest {
            mode: MergeMode::Replace,
            segmentation: data.registry.segmentation.clone(),
            detection: vec![],
            softmax: softmax.iter().map(|(l, _)| *l).collect(),
            scenes: data.scenes.iter().map(|s| s.id).collect(),
        },
        scenes: data
            .scenes
            .iter()
            .map(|s| {
                let rows = softmax.iter().cloned().collect();
                (s.id, RecordedScene { seg_maps: s.seg_maps.clone(), detections: vec![], softmax: rows })
            })
            .collect(),
    }
}

#[test]
fn ingest_recorded_segmentation_with_simulated_detections() {
    let (bundle, data_dir) = bundle();
    let data = Dataset::load(data_dir).unwrap();
    let rec_dir = fresh("recorded_mixed");
    recorded_from(&data, None).save(&rec_dir).unwrap();
    let out_dir = fresh("ingested_mixed");
    let stdout = ok(&entri(
        &["ingest", "--bundle", bundle.to_str().unwrap(), "--recorded", rec_dir.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[],
    ));
    assert!(stdout.contains("ingested test"), "{stdout}");
    let merged = Dataset::load(&out_dir).unwrap();
    assert!(merged.world.is_none());
    assert_eq!(merged.scenes.len(), data.scenes.len());
    let metrics: Metrics = read_json(&out_dir.join("eval_test.json")).unwrap();
    let recorded: BundleMetrics = read_json(&bundle.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics, recorded.test);
}

#[test]
fn ingest_missing_scene_file_names_the_id() {
    let (bundle, data_dir) = bundle();
    let data = Dataset::load(data_dir).unwrap();
    let rec_dir = fresh("recorded_missing");
    recorded_from(&data, None).save(&rec_dir).unwrap();
    std::fs::remove_file(rec_dir.join(seg_file(12, 1))).unwrap();
    let out = entri(&["ingest", "--bundle", bundle.to_str().unwrap(), "--recorded", rec_dir.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scene 12"), "{err}");
}

#[test]
fn ingested_low_softmax_is_returned_verbatim() {
    let (bundle, data_dir) = bundle();
    let data = Dataset::load(data_dir).unwrap();
    let rows = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.7, 0.1, 0.1, 0.1]];
    let rec_dir = fresh("recorded_softmax");
    recorded_from(&data, Some((Level::Low, rows.clone()))).save(&rec_dir).unwrap();
    let out_dir = fresh("ingested_softmax");
    ok(&entri(
        &["ingest", "--bundle", bundle.to_str().unwrap(), "--recorded", rec_dir.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[],
    ));
    let merged = Dataset::load(&out_dir).unwrap();
    let model = EnsembleModel::load(bundle).unwrap();
    for s in &merged.scenes {
        assert_eq!(model.submodels[&Level::Low].predict(s).unwrap().rows, rows);
    }
}
