//! Accuracy-weighted stacking of the three sub-models, final prediction,
//! evaluation metrics and the on-disk bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, train_classifier, Classifier, TrainParams, TrainReport};
use crate::dataset::{read_json, write_json, Dataset};
use crate::error::{Error, Result, ENSEMBLE};
use crate::scene::{Level, SceneInstance, Split};
use crate::submodel::{
    accuracies_from_matrices, predict_many, train_submodel, Architecture, FeatureConfig, InputSignature,
    PredictionMatrix, SubModel,
};

pub const ALPHA_GRID: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

/// Non-empty subset of levels, always iterated low, mid, high.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Level>", into = "Vec<Level>")]
pub struct LevelSet(u8);

impl LevelSet {
    pub const ALL: LevelSet = LevelSet(0b111);

    fn bit(level: Level) -> u8 {
        match level {
            Level::Low => 1,
            Level::Mid => 2,
            Level::High => 4,
        }
    }

    pub fn new(levels: &[Level]) -> Result<Self> {
        let bits = levels.iter().fold(0, |acc, &l| acc | Self::bit(l));
        if bits == 0 {
            return Err(Error::config(ENSEMBLE, "at least one level must be active"));
        }
        Ok(LevelSet(bits))
    }

    pub fn contains(self, level: Level) -> bool {
        self.0 & Self::bit(level) != 0
    }

    pub fn levels(self) -> Vec<Level> {
        Level::ALL.into_iter().filter(|&l| self.contains(l)).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The seven ablation cases: singles, pairs, then all three.
    pub fn ablation_cases() -> [LevelSet; 7] {
        [1, 2, 4, 3, 5, 6, 7].map(LevelSet)
    }

    /// Parses `low+mid` style names.
    pub fn parse(s: &str) -> Result<Self> {
        let levels = s
            .split('+')
            .map(|p| Level::parse(p.trim()).ok_or_else(|| Error::config(ENSEMBLE, format!("unknown level '{p}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&levels)
    }
}

impl fmt::Display for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.levels().iter().map(|l| l.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl TryFrom<Vec<Level>> for LevelSet {
    type Error = Error;
    fn try_from(v: Vec<Level>) -> Result<Self> {
        LevelSet::new(&v)
    }
}

impl From<LevelSet> for Vec<Level> {
    fn from(s: LevelSet) -> Self {
        s.levels()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub alpha: f64,
}

/// `w_m = (accuracy_m * 100)^alpha`. Accuracies under 1% would give a weight
/// below one and are rejected.
pub fn compute_weights(accuracies: &[f64], alpha: f64) -> Result<WeightVector> {
    if !(1.0..=3.0).contains(&alpha) {
        return Err(Error::config(ENSEMBLE, format!("alpha {alpha} outside [1, 3]")));
    }
    if accuracies.is_empty() {
        return Err(Error::data(ENSEMBLE, "no validation accuracies to weight"));
    }
    if let Some((m, a)) = accuracies.iter().enumerate().find(|(_, a)| !(0.01..=1.0).contains(*a)) {
        return Err(Error::numeric(
            ENSEMBLE,
            format!("discriminator {m} has validation accuracy {a}; weights need at least 1% accuracy"),
        ));
    }
    Ok(WeightVector { weights: accuracies.iter().map(|a| (a * 100.0).powf(alpha)).collect(), alpha })
}

/// Weights of every discriminator of `sub`, measured on `scenes`.
pub fn compute_weights_for(sub: &SubModel, scenes: &[&SceneInstance], alpha: f64) -> Result<WeightVector> {
    let matrices = predict_many(sub, scenes)?;
    compute_weights(&accuracies_from_matrices(&matrices, scenes)?, alpha)
}

/// Concatenation of the weighted, row-major flattened matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaInput {
    pub vector: Vec<f64>,
}

pub fn build_meta_input(
    matrices: &BTreeMap<Level, PredictionMatrix>,
    weights: &BTreeMap<Level, WeightVector>,
    active: LevelSet,
) -> Result<MetaInput> {
    let mut vector = Vec::new();
    for level in active.levels() {
        let pm = matrices
            .get(&level)
            .ok_or_else(|| Error::shape(ENSEMBLE, format!("no {level} prediction matrix")))?;
        let w = weights
            .get(&level)
            .ok_or_else(|| Error::shape(ENSEMBLE, format!("no {level} weights")))?;
        if w.weights.len() != pm.n_rows() {
            return Err(Error::shape(
                ENSEMBLE,
                format!("{level}: {} weights for {} matrix rows", w.weights.len(), pm.n_rows()),
            ));
        }
        for (row, wm) in pm.rows.iter().zip(&w.weights) {
            vector.extend(row.iter().map(|y| wm * y));
        }
    }
    Ok(MetaInput { vector })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub architectures: Vec<Architecture>,
    pub train: TrainParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Hidden width as a multiple of the meta input width.
    pub hidden_multiplier: usize,
    pub seed: u64,
    pub train: TrainParams,
    pub alpha_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub active_levels: LevelSet,
    pub features: FeatureConfig,
    pub low: LevelConfig,
    pub mid: LevelConfig,
    pub high: LevelConfig,
    pub meta: MetaConfig,
}

impl EnsembleConfig {
    pub fn level(&self, level: Level) -> &LevelConfig {
        match level {
            Level::Low => &self.low,
            Level::Mid => &self.mid,
            Level::High => &self.high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.meta.alpha_grid.is_empty() || self.meta.alpha_grid.iter().any(|a| !(1.0..=3.0).contains(a)) {
            return Err(Error::config(ENSEMBLE, format!("alpha grid {:?} must be non-empty and inside [1, 3]", self.meta.alpha_grid)));
        }
        if self.meta.hidden_multiplier == 0 {
            return Err(Error::config(ENSEMBLE, "meta hidden multiplier must be positive"));
        }
        if self.features.low_pool == 0 || self.features.mid_pool == 0 {
            return Err(Error::config(ENSEMBLE, "pooling grids must be positive"));
        }
        for level in self.active_levels.levels() {
            if self.level(level).architectures.is_empty() {
                return Err(Error::config(ENSEMBLE, format!("{level} level lists no discriminator architectures")));
            }
        }
        Ok(())
    }
}

/// Trained discriminators of every level, before stacking.
#[derive(Clone, Debug, PartialEq)]
pub struct SubModelSet {
    pub submodels: BTreeMap<Level, SubModel>,
    pub accuracies: BTreeMap<Level, Vec<f64>>,
    pub reports: BTreeMap<Level, Vec<TrainReport>>,
}

/// Outcome of one alpha candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub select_accuracy: f64,
    pub meta_train_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    pub categories: Vec<String>,
    pub submodels: BTreeMap<Level, SubModel>,
    pub accuracies: BTreeMap<Level, Vec<f64>>,
    pub active: LevelSet,
    pub alpha: f64,
    pub weights: BTreeMap<Level, WeightVector>,
    /// Applied to meta inputs so they stay in [0, 1]: one over the largest weight.
    pub meta_scale: f64,
    pub meta: Classifier,
    pub trials: Vec<AlphaTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalPrediction {
    pub category: usize,
    pub meta_softmax: Vec<f64>,
    pub matrices: BTreeMap<Level, PredictionMatrix>,
}

/// Trains the discriminators of every level in `levels` on the training split
/// and measures their validation accuracies.
pub fn train_submodels(data: &Dataset, config: &EnsembleConfig, levels: LevelSet) -> Result<SubModelSet> {
    config.validate()?;
    let train = data.split(Split::Train);
    let val = data.split(Split::Validation);
    if train.is_empty() || val.is_empty() {
        return Err(Error::data(ENSEMBLE, "training and validation splits must both be non-empty"));
    }
    let n = data.n_categories();
    let trained = levels
        .levels()
        .into_par_iter()
        .map(|level| {
            let lc = config.level(level);
            let (sub, reports) = train_submodel(level, &train, &lc.architectures, config.features, &lc.train, n)?;
            let acc = accuracies_from_matrices(&predict_many(&sub, &val)?, &val)?;
            log::info!("{level} validation accuracies: {acc:?}");
            Ok((level, sub, acc, reports))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = SubModelSet { submodels: BTreeMap::new(), accuracies: BTreeMap::new(), reports: BTreeMap::new() };
    for (level, sub, acc, reports) in trained {
        set.submodels.insert(level, sub);
        set.accuracies.insert(level, acc);
        set.reports.insert(level, reports);
    }
    Ok(set)
}

/// Stratified halves of the validation scenes: within each label, scenes
/// alternate between meta-train (even rank) and meta-select (odd rank).
pub fn meta_halves(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut fit, mut select) = (Vec::new(), Vec::new());
    for (i, &y) in labels.iter().enumerate() {
        let rank = seen.entry(y).or_insert(0);
        if rank.is_multiple_of(2) { fit.push(i) } else { select.push(i) }
        *rank += 1;
    }
    (fit, select)
}

fn meta_scale(weights: &BTreeMap<Level, WeightVector>) -> f64 {
    let max = weights.values().flat_map(|w| w.weights.iter().copied()).fold(0.0, f64::max);
    1.0 / max
}

/// Chooses alpha and trains the meta classifier on validation predictions.
///
/// `val_matrices[i]` holds the prediction matrices of validation scene `i`
/// for at least every active level.
pub fn fit_meta(
    categories: &[String],
    subs: &SubModelSet,
    val_matrices: &[BTreeMap<Level, PredictionMatrix>],
    val_labels: &[usize],
    active: LevelSet,
    config: &MetaConfig,
) -> Result<EnsembleModel> {
    for level in active.levels() {
        if !subs.submodels.contains_key(&level) {
            return Err(Error::config(ENSEMBLE, format!("no trained {level} sub-model for active set {active}")));
        }
    }
    let (fit_idx, select_idx) = meta_halves(val_labels);
    if fit_idx.is_empty() || select_idx.is_empty() {
        return Err(Error::data(ENSEMBLE, "validation split too small to hold out a meta-select half"));
    }
    let n = categories.len();
    let trials = config
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let weights = active
                .levels()
                .into_iter()
                .map(|l| Ok((l, compute_weights(&subs.accuracies[&l], alpha)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let scale = meta_scale(&weights);
            let inputs = val_matrices
                .iter()
                .map(|m| Ok(scaled(build_meta_input(m, &weights, active)?, scale)))
                .collect::<Result<Vec<_>>>()?;
            let width = inputs[0].len();
            let model = Classifier::new(&[width, config.hidden_multiplier * width, n], config.seed)?;
            let xs: Vec<Vec<f64>> = fit_idx.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<usize> = fit_idx.iter().map(|&i| val_labels[i]).collect();
            let (meta, report) = train_classifier(model, &xs, &ys, &config.train)
                .map_err(|e| Error::numeric(ENSEMBLE, format!("meta model at alpha {alpha}: {e}")))?;
            let mut hits = 0;
            for &i in &select_idx {
                if argmax(&meta.predict_proba(&inputs[i])?) == val_labels[i] {
                    hits += 1;
                }
            }
            let trial = AlphaTrial {
                alpha,
                select_accuracy: hits as f64 / select_idx.len() as f64,
                meta_train_loss: report.final_loss,
            };
            Ok((trial, weights, scale, meta))
        })
        .collect::<Result<Vec<_>>>()?;
    // strict improvement only, so ties keep the smaller alpha
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials[a].0.alpha.total_cmp(&trials[b].0.alpha));
    let mut best = order[0];
    for &i in &order[1..] {
        if trials[i].0.select_accuracy > trials[best].0.select_accuracy {
            best = i;
        }
    }
    let log: Vec<AlphaTrial> = order.iter().map(|&i| trials[i].0.clone()).collect();
    let (chosen, weights, scale, meta) = trials.into_iter().nth(best).expect("index in range");
    log::info!("levels {active}: alpha {} (meta-select accuracy {:.4})", chosen.alpha, chosen.select_accuracy);
    Ok(EnsembleModel {
        categories: categories.to_vec(),
        submodels: subs.submodels.clone(),
        accuracies: subs.accuracies.clone(),
        active,
        alpha: chosen.alpha,
        weights,
        meta_scale: scale,
        meta,
        trials: log,
    })
}

fn scaled(input: MetaInput, scale: f64) -> Vec<f64> {
    input.vector.into_iter().map(|v| v * scale).collect()
}

/// Prediction matrices of `scenes` for every level in `levels`.
pub fn level_matrices(
    submodels: &BTreeMap<Level, SubModel>,
    levels: LevelSet,
    scenes: &[&SceneInstance],
) -> Result<Vec<BTreeMap<Level, PredictionMatrix>>> {
    scenes
        .par_iter()
        .map(|s| {
            levels
                .levels()
                .into_iter()
                .map(|l| {
                    let sub = submodels
                        .get(&l)
                        .ok_or_else(|| Error::config(ENSEMBLE, format!("no trained {l} sub-model")))?;
                    Ok((l, sub.predict(s)?))
                })
                .collect()
        })
        .collect()
}

/// Trains sub-models for the active levels, then the meta classifier.
pub fn train_ensemble(data: &Dataset, config: &EnsembleConfig) -> Result<(EnsembleModel, SubModelSet)> {
    let subs = train_submodels(data, config, config.active_levels)?;
    let model = stack(data, &subs, config.active_levels, &config.meta)?;
    Ok((model, subs))
}

/// Fits the meta classifier for `active` on already trained sub-models.
pub fn stack(data: &Dataset, subs: &SubModelSet, active: LevelSet, meta: &MetaConfig) -> Result<EnsembleModel> {
    let val = data.split(Split::Validation);
    let matrices = level_matrices(&subs.submodels, active, &val)?;
    let labels: Vec<usize> = val.iter().map(|s| s.label).collect();
    fit_meta(&data.categories, subs, &matrices, &labels, active, meta)
}

impl EnsembleModel {
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    /// Meta classifier input for the given matrices, scaling included.
    pub fn meta_features(&self, matrices: &BTreeMap<Level, PredictionMatrix>) -> Result<Vec<f64>> {
        Ok(scaled(build_meta_input(matrices, &self.weights, self.active)?, self.meta_scale))
    }

    pub fn predict_matrices(&self, matrices: BTreeMap<Level, PredictionMatrix>) -> Result<FinalPrediction> {
        let meta_softmax = self.meta.predict_proba(&self.meta_features(&matrices)?)?;
        Ok(FinalPrediction { category: argmax(&meta_softmax), meta_softmax, matrices })
    }

    pub fn active_submodel(&self, level: Level) -> Option<&SubModel> {
        if self.active.contains(level) {
            self.submodels.get(&level)
        } else {
            None
        }
    }

    /// Active sub-model matrices of one scene.
    pub fn scene_matrices(&self, scene: &SceneInstance) -> Result<BTreeMap<Level, PredictionMatrix>> {
        self.active
            .levels()
            .into_iter()
            .map(|l| {
                let sub = self
                    .submodels
                    .get(&l)
                    .ok_or_else(|| Error::untrained(ENSEMBLE, format!("no trained {l} sub-model")))?;
                Ok((l, sub.predict(scene)?))
            })
            .collect()
    }
}

pub fn predict_final(model: &EnsembleModel, scene: &SceneInstance) -> Result<FinalPrediction> {
    let matrices = model.scene_matrices(scene)?;
    model.predict_matrices(matrices)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_scenes: usize,
    /// Keyed by k.
    pub top_k: BTreeMap<usize, f64>,
    /// Rows are true labels, columns predictions.
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    pub fn top(&self, k: usize) -> f64 {
        self.top_k[&k]
    }
}

/// Position of `label` when classes are sorted by descending probability,
/// ties by ascending index.
pub fn rank_of(probs: &[f64], label: usize) -> usize {
    let p = probs[label];
    probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count()
}

/// Top-k accuracies and confusion matrix from precomputed softmax outputs.
pub fn metrics_from_outputs(outputs: &[Vec<f64>], labels: &[usize], n_classes: usize, ks: &[usize]) -> Result<Metrics> {
    if outputs.is_empty() {
        return Err(Error::data(ENSEMBLE, "no scenes to evaluate"));
    }
    if let Some(k) = ks.iter().find(|&&k| k == 0 || k > n_classes) {
        return Err(Error::config(ENSEMBLE, format!("Top@{k} is undefined for {n_classes} categories")));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut hits = vec![0usize; ks.len()];
    for (p, &y) in outputs.iter().zip(labels) {
        confusion[y][argmax(p)] += 1;
        let rank = rank_of(p, y);
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
    }
    let n = outputs.len();
    Ok(Metrics {
        n_scenes: n,
        top_k: ks.iter().zip(&hits).map(|(&k, &h)| (k, h as f64 / n as f64)).collect(),
        confusion,
    })
}

pub fn evaluate(model: &EnsembleModel, scenes: &[&SceneInstance], ks: &[usize]) -> Result<Metrics> {
    let outputs = scenes
        .par_iter()
        .map(|s| predict_final(model, s).map(|f| f.meta_softmax))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = scenes.iter().map(|s| s.label).collect();
    metrics_from_outputs(&outputs, &labels, model.n_categories(), ks)
}

/// Top@k values clipped to the number of categories.
pub fn default_ks(n_categories: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [1, 2, 5].iter().map(|&k| k.min(n_categories)).collect();
    ks.dedup();
    ks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BundleLevel {
    signature: InputSignature,
    discriminators: Vec<String>,
    validation_accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BundleManifest {
    version: u32,
    categories: Vec<String>,
    active_levels: LevelSet,
    features: FeatureConfig,
    alpha: f64,
    meta_scale: f64,
    meta: String,
    levels: BTreeMap<Level, BundleLevel>,
    trials: Vec<AlphaTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub alpha: f64,
    pub weights: BTreeMap<Level, Vec<f64>>,
    pub validation_accuracies: BTreeMap<Level, Vec<f64>>,
}

pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const META_FILE: &str = "meta.ckpt";

pub fn discriminator_file(level: Level, m: usize) -> String {
    format!("disc_{level}_{m}.ckpt")
}

impl EnsembleModel {
    pub fn weights_file(&self) -> WeightsFile {
        WeightsFile {
            alpha: self.alpha,
            weights: self.weights.iter().map(|(l, w)| (*l, w.weights.clone())).collect(),
            validation_accuracies: self.accuracies.clone(),
        }
    }

    /// Writes the bundle files into `dir`, which must exist.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut levels = BTreeMap::new();
        for (level, sub) in &self.submodels {
            let mut files = Vec::new();
            for (m, d) in sub.discriminators().iter().enumerate() {
                let name = discriminator_file(*level, m);
                d.save(&dir.join(&name))?;
                files.push(name);
            }
            levels.insert(
                *level,
                BundleLevel {
                    signature: sub.signature().clone(),
                    discriminators: files,
                    validation_accuracies: self.accuracies[level].clone(),
                },
            );
        }
        self.meta.save(&dir.join(META_FILE))?;
        let features = self.submodels.values().next().map(|s| s.features()).unwrap_or_default();
        write_json(
            &dir.join(MODEL_FILE),
            &BundleManifest {
                version: 1,
                categories: self.categories.clone(),
                active_levels: self.active,
                features,
                alpha: self.alpha,
                meta_scale: self.meta_scale,
                meta: META_FILE.into(),
                levels,
                trials: self.trials.clone(),
            },
        )?;
        write_json(&dir.join(WEIGHTS_FILE), &self.weights_file())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join(MODEL_FILE))?;
        let n = manifest.categories.len();
        let mut submodels = BTreeMap::new();
        let mut accuracies = BTreeMap::new();
        for (level, entry) in manifest.levels {
            let discs = entry
                .discriminators
                .iter()
                .map(|f| Classifier::load(&dir.join(f)))
                .collect::<Result<Vec<_>>>()?;
            if entry.signature.level() != level || entry.validation_accuracies.len() != discs.len() {
                return Err(Error::data(ENSEMBLE, format!("{}: inconsistent {level} entry", dir.join(MODEL_FILE).display())));
            }
            submodels.insert(level, SubModel::new(discs, manifest.features, entry.signature, n)?);
            accuracies.insert(level, entry.validation_accuracies);
        }
        let weights_file: WeightsFile = read_json(&dir.join(WEIGHTS_FILE))?;
        let weights = weights_file
            .weights
            .into_iter()
            .map(|(l, w)| (l, WeightVector { weights: w, alpha: weights_file.alpha }))
            .collect();
        let meta = Classifier::load(&dir.join(&manifest.meta))?;
        let model = Self {
            categories: manifest.categories,
            submodels,
            accuracies,
            active: manifest.active_levels,
            alpha: manifest.alpha,
            weights,
            meta_scale: manifest.meta_scale,
            meta,
            trials: manifest.trials,
        };
        model.check()?;
        Ok(model)
    }

    /// Consistency of the meta width with the active levels.
    pub fn check(&self) -> Result<()> {
        let mut width = 0;
        for level in self.active.levels() {
            let sub = self
                .submodels
                .get(&level)
                .ok_or_else(|| Error::data(ENSEMBLE, format!("active level {level} has no sub-model")))?;
            let w = self
                .weights
                .get(&level)
                .ok_or_else(|| Error::data(ENSEMBLE, format!("active level {level} has no weights")))?;
            if w.weights.len() != sub.m() {
                return Err(Error::data(ENSEMBLE, format!("{level}: {} weights for {} discriminators", w.weights.len(), sub.m())));
            }
            width += sub.m() * self.n_categories();
        }
        if self.meta.input_width() != width || self.meta.output_width() != self.n_categories() {
            return Err(Error::shape(
                ENSEMBLE,
                format!(
                    "meta classifier maps {} -> {}, active levels need {width} -> {}",
                    self.meta.input_width(),
                    self.meta.output_width(),
                    self.n_categories()
                ),
            ));
        }
        Ok(())
    }
}
