//! Level-specific sub-models: a set of heterogeneous discriminators over one
//! scene representation, producing a prediction matrix per scene.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, train_classifier, Classifier, TrainParams, TrainReport};
use crate::error::{Error, Result, DISCRIMINATORS};
use crate::features::{build_hlf, build_mlf, pixel_features, pooled_len, HighLevelFeature, MidLevelFeature};
use crate::image::RgbImage;
use crate::scene::{Level, SceneInstance};

/// Tolerance on softmax row sums for computed matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Side of the average-pooling grid applied to raw pixels.
    pub low_pool: usize,
    /// Side of the average-pooling grid applied to each mid-level channel.
    pub mid_pool: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { low_pool: 8, mid_pool: 8 }
    }
}

/// Hidden widths and initialization seed of one discriminator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub seed: u64,
}

/// What a sub-model was trained on; checked at prediction time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputSignature {
    Low { image_size: [usize; 2] },
    Mid { image_size: [usize; 2], providers: usize },
    High { vocabulary_sizes: Vec<usize> },
}

impl InputSignature {
    pub fn level(&self) -> Level {
        match self {
            InputSignature::Low { .. } => Level::Low,
            InputSignature::Mid { .. } => Level::Mid,
            InputSignature::High { .. } => Level::High,
        }
    }

    pub fn of_scene(level: Level, scene: &SceneInstance) -> Self {
        let image_size = [scene.image.width(), scene.image.height()];
        match level {
            Level::Low => InputSignature::Low { image_size },
            Level::Mid => InputSignature::Mid { image_size, providers: scene.seg_maps.len() },
            Level::High => InputSignature::High {
                vocabulary_sizes: scene.detections.iter().map(|d| d.vocabulary_size).collect(),
            },
        }
    }

    /// Width of the flattened input vector.
    pub fn input_width(&self, features: &FeatureConfig) -> usize {
        match self {
            InputSignature::Low { image_size } => pooled_len(image_size[0], image_size[1], 3, features.low_pool),
            InputSignature::Mid { image_size, providers } => {
                pooled_len(image_size[0], image_size[1], 3 * providers, features.mid_pool)
            }
            InputSignature::High { vocabulary_sizes } => vocabulary_sizes.iter().sum(),
        }
    }
}

/// `M` softmax rows of one sub-model for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    pub level: Level,
    pub rows: Vec<Vec<f64>>,
}

impl PredictionMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_classes(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Mean over rows of column `class`.
    pub fn column_mean(&self, class: usize) -> f64 {
        self.rows.iter().map(|r| r[class]).sum::<f64>() / self.rows.len() as f64
    }

    /// Column means; the sub-model's averaged opinion.
    pub fn mean_row(&self) -> Vec<f64> {
        (0..self.n_classes()).map(|c| self.column_mean(c)).collect()
    }

    /// Class with the largest mean probability, ties to the lowest index.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.mean_row())
    }

    pub fn validate(&self, m: usize, n_classes: usize, tolerance: f64) -> Result<()> {
        if self.rows.len() != m || self.rows.iter().any(|r| r.len() != n_classes) {
            return Err(Error::shape(
                DISCRIMINATORS,
                format!("{} prediction matrix must be {m} x {n_classes}", self.level),
            ));
        }
        for (i, r) in self.rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|v| !(0.0..=1.0 + tolerance).contains(v)) || (sum - 1.0).abs() > tolerance {
                return Err(Error::data(DISCRIMINATORS, format!("{} row {i} is not a probability vector", self.level)));
            }
        }
        Ok(())
    }
}

/// Evaluates every classifier on `x`; row `i` belongs to classifier `i`.
pub fn evaluate_discriminators(level: Level, discriminators: &[Classifier], x: &[f64]) -> Result<PredictionMatrix> {
    let rows = discriminators.iter().map(|d| d.predict_proba(x)).collect::<Result<Vec<_>>>()?;
    Ok(PredictionMatrix { level, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubModel {
    level: Level,
    discriminators: Vec<Classifier>,
    features: FeatureConfig,
    signature: InputSignature,
    n_categories: usize,
}

impl SubModel {
    /// Refuses empty sets, mismatched widths and repeated architectures.
    pub fn new(
        discriminators: Vec<Classifier>,
        features: FeatureConfig,
        signature: InputSignature,
        n_categories: usize,
    ) -> Result<Self> {
        let level = signature.level();
        if discriminators.is_empty() {
            return Err(Error::config(DISCRIMINATORS, format!("{level} sub-model needs at least one discriminator")));
        }
        let width = signature.input_width(&features);
        for (i, d) in discriminators.iter().enumerate() {
            if d.input_width() != width || d.output_width() != n_categories {
                return Err(Error::shape(
                    DISCRIMINATORS,
                    format!(
                        "{level} discriminator {i} maps {} -> {}, sub-model needs {width} -> {n_categories}",
                        d.input_width(),
                        d.output_width()
                    ),
                ));
            }
            if let Some(j) = discriminators[..i].iter().position(|o| o.layer_sizes() == d.layer_sizes()) {
                return Err(Error::config(
                    DISCRIMINATORS,
                    format!("{level} discriminators {j} and {i} share layer sizes {:?}", d.layer_sizes()),
                ));
            }
        }
        Ok(Self { level, discriminators, features, signature, n_categories })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn discriminators(&self) -> &[Classifier] {
        &self.discriminators
    }

    pub fn m(&self) -> usize {
        self.discriminators.len()
    }

    pub fn features(&self) -> FeatureConfig {
        self.features
    }

    pub fn signature(&self) -> &InputSignature {
        &self.signature
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    fn check_signature(&self, scene: &SceneInstance) -> Result<()> {
        let got = InputSignature::of_scene(self.level, scene);
        if got != self.signature {
            let what = match self.level {
                Level::Low => "image size",
                Level::Mid => "segmentation provider count or image size",
                Level::High => "detection vocabulary",
            };
            return Err(Error::shape(
                DISCRIMINATORS,
                format!("scene {}: {what} {got:?} differs from training-time {:?}", scene.id, self.signature),
            ));
        }
        Ok(())
    }

    /// Flattened input vector for `scene` at this sub-model's level.
    pub fn scene_features(&self, scene: &SceneInstance) -> Result<Vec<f64>> {
        self.check_signature(scene)?;
        Ok(match self.level {
            Level::Low => self.image_features(&scene.image),
            Level::Mid => self.mlf_features(&build_mlf(&scene.seg_maps)?),
            Level::High => build_hlf(&scene.detections)?.as_f64(),
        })
    }

    pub fn image_features(&self, image: &RgbImage) -> Vec<f64> {
        pixel_features(image, self.features.low_pool)
    }

    pub fn mlf_features(&self, mlf: &MidLevelFeature) -> Vec<f64> {
        mlf.pooled(self.features.mid_pool)
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<PredictionMatrix> {
        evaluate_discriminators(self.level, &self.discriminators, x)
    }

    pub fn predict_image(&self, image: &RgbImage) -> Result<PredictionMatrix> {
        self.predict_features(&self.image_features(image))
    }

    pub fn predict_mlf(&self, mlf: &MidLevelFeature) -> Result<PredictionMatrix> {
        self.predict_features(&self.mlf_features(mlf))
    }

    pub fn predict_hlf(&self, hlf: &HighLevelFeature) -> Result<PredictionMatrix> {
        self.predict_features(&hlf.as_f64())
    }

    /// Recorded softmax rows when the scene carries them for this level,
    /// otherwise the discriminators' outputs.
    pub fn predict(&self, scene: &SceneInstance) -> Result<PredictionMatrix> {
        if let Some(rows) = scene.recorded_softmax.get(&self.level) {
            let pm = PredictionMatrix { level: self.level, rows: rows.clone() };
            return pm
                .validate(self.m(), self.n_categories, 1e-6)
                .map(|_| pm)
                .map_err(|e| Error::data(DISCRIMINATORS, format!("scene {}: recorded softmax: {e}", scene.id)));
        }
        self.predict_features(&self.scene_features(scene)?)
    }
}

fn expect_level(sub: &SubModel, level: Level) -> Result<()> {
    if sub.level != level {
        return Err(Error::config(DISCRIMINATORS, format!("expected a {level} sub-model, got {}", sub.level)));
    }
    Ok(())
}

pub fn predict_low(sub: &SubModel, scene: &SceneInstance) -> Result<PredictionMatrix> {
    expect_level(sub, Level::Low)?;
    sub.predict(scene)
}

pub fn predict_mid(sub: &SubModel, scene: &SceneInstance) -> Result<PredictionMatrix> {
    expect_level(sub, Level::Mid)?;
    sub.predict(scene)
}

pub fn predict_high(sub: &SubModel, scene: &SceneInstance) -> Result<PredictionMatrix> {
    expect_level(sub, Level::High)?;
    sub.predict(scene)
}

/// Prediction matrices for many scenes, in input order.
pub fn predict_many(sub: &SubModel, scenes: &[&SceneInstance]) -> Result<Vec<PredictionMatrix>> {
    scenes.par_iter().map(|s| sub.predict(s)).collect()
}

/// Fraction of `scenes` where discriminator `index` ranks the label first.
pub fn validation_accuracy(sub: &SubModel, index: usize, scenes: &[&SceneInstance]) -> Result<f64> {
    if index >= sub.m() {
        return Err(Error::config(DISCRIMINATORS, format!("{} sub-model has no discriminator {index}", sub.level)));
    }
    Ok(accuracies_from_matrices(&predict_many(sub, scenes)?, scenes)?[index])
}

/// Per-discriminator accuracy given precomputed matrices.
pub fn accuracies_from_matrices(matrices: &[PredictionMatrix], scenes: &[&SceneInstance]) -> Result<Vec<f64>> {
    if scenes.is_empty() {
        return Err(Error::data(DISCRIMINATORS, "validation split is empty"));
    }
    let m = matrices[0].n_rows();
    let mut hits = vec![0usize; m];
    for (pm, s) in matrices.iter().zip(scenes) {
        for (i, row) in pm.rows.iter().enumerate() {
            if argmax(row) == s.label {
                hits[i] += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / scenes.len() as f64).collect())
}

/// Trains one discriminator per architecture on `scenes`, in parallel.
pub fn train_submodel(
    level: Level,
    scenes: &[&SceneInstance],
    architectures: &[Architecture],
    features: FeatureConfig,
    params: &TrainParams,
    n_categories: usize,
) -> Result<(SubModel, Vec<TrainReport>)> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::data(DISCRIMINATORS, format!("no training scenes for the {level} sub-model")))?;
    let signature = InputSignature::of_scene(level, first);
    let width = signature.input_width(&features);
    // an untrained placeholder only used to extract features
    let probe = SubModel {
        level,
        discriminators: Vec::new(),
        features,
        signature: signature.clone(),
        n_categories,
    };
    let inputs = scenes
        .par_iter()
        .map(|s| probe.scene_features(s))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = scenes.iter().map(|s| s.label).collect();
    let trained = architectures
        .par_iter()
        .enumerate()
        .map(|(i, arch)| {
            let mut sizes = vec![width];
            sizes.extend(&arch.hidden);
            sizes.push(n_categories);
            let model = Classifier::new(&sizes, arch.seed)?;
            let p = TrainParams { rng_seed: params.rng_seed.wrapping_add(arch.seed), ..*params };
            train_classifier(model, &inputs, &labels, &p)
                .map_err(|e| annotate(e, &format!("{level} discriminator {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (discriminators, reports): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    Ok((SubModel::new(discriminators, features, signature, n_categories)?, reports))
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::Numeric { module, msg } => Error::Numeric { module, msg: format!("{ctx}: {msg}") },
        Error::Data { module, msg } => Error::Data { module, msg: format!("{ctx}: {msg}") },
        Error::Shape { module, msg } => Error::Shape { module, msg: format!("{ctx}: {msg}") },
        Error::Config { module, msg } => Error::Config { module, msg: format!("{ctx}: {msg}") },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::scene::{Split, SegmentationMap};
    use crate::world::small_world;

    fn data() -> Dataset {
        Dataset::synthetic(&small_world(4, 24), 8, [0.5, 0.25, 0.25]).unwrap()
    }

    fn params() -> TrainParams {
        TrainParams { epochs: 15, batch_size: 8, learning_rate: 0.05, rng_seed: 1, weight_decay: 0.0 }
    }

    fn archs() -> Vec<Architecture> {
        vec![Architecture { hidden: vec![6], seed: 1 }, Architecture { hidden: vec![10], seed: 2 }]
    }

    fn trained(level: Level, ds: &Dataset) -> SubModel {
        let train = ds.split(Split::Train);
        train_submodel(level, &train, &archs(), FeatureConfig { low_pool: 4, mid_pool: 4 }, &params(), 4)
            .unwrap()
            .0
    }

    #[test]
    fn matrices_have_one_row_per_discriminator() {
        let ds = data();
        for level in Level::ALL {
            let sub = trained(level, &ds);
            let pm = sub.predict(&ds.scenes[0]).unwrap();
            assert_eq!((pm.n_rows(), pm.n_classes()), (2, 4));
            pm.validate(2, 4, ROW_SUM_TOLERANCE).unwrap();
        }
    }

    #[test]
    fn rows_equal_direct_discriminator_calls() {
        let ds = data();
        let scene = &ds.scenes[3];
        let low = trained(Level::Low, &ds);
        let x = pixel_features(&scene.image, 4);
        for (i, d) in low.discriminators().iter().enumerate() {
            assert_eq!(predict_low(&low, scene).unwrap().rows[i], d.predict_proba(&x).unwrap());
        }
        let mid = trained(Level::Mid, &ds);
        let mlf = build_mlf(&scene.seg_maps).unwrap().pooled(4);
        for (i, d) in mid.discriminators().iter().enumerate() {
            assert_eq!(predict_mid(&mid, scene).unwrap().rows[i], d.predict_proba(&mlf).unwrap());
        }
    }

    #[test]
    fn doubling_detections_matches_direct_evaluation() {
        let ds = data();
        let high = trained(Level::High, &ds);
        let mut scene = ds.scenes[2].clone();
        for set in &mut scene.detections {
            let copy = set.boxes.clone();
            set.boxes.extend(copy);
        }
        let doubled: Vec<f64> = build_hlf(&ds.scenes[2].detections).unwrap().as_f64().iter().map(|v| 2.0 * v).collect();
        let got = predict_high(&high, &scene).unwrap();
        for (i, d) in high.discriminators().iter().enumerate() {
            assert_eq!(got.rows[i], d.predict_proba(&doubled).unwrap());
        }
    }

    #[test]
    fn zero_detections_match_the_all_zero_response() {
        let ds = data();
        let high = trained(Level::High, &ds);
        let mut scene = ds.scenes[0].clone();
        for set in &mut scene.detections {
            set.boxes.clear();
        }
        let zeros = vec![0.0; 12];
        let got = high.predict(&scene).unwrap();
        assert_eq!(got.rows[1], high.discriminators()[1].predict_proba(&zeros).unwrap());
    }

    #[test]
    fn all_background_maps_give_a_constant_response() {
        let ds = data();
        let mid = trained(Level::Mid, &ds);
        let blank = |s: &SceneInstance| {
            let mut s = s.clone();
            s.seg_maps = s
                .seg_maps
                .iter()
                .map(|m| SegmentationMap::background(24, 24, m.provider_id(), m.class_names().to_vec(), m.background_id()).unwrap())
                .collect();
            s
        };
        let a = mid.predict(&blank(&ds.scenes[0])).unwrap();
        let b = mid.predict(&blank(&ds.scenes[20])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_discriminators_give_identical_rows() {
        let a = Classifier::new(&[3, 4, 2], 9).unwrap();
        let (a, _) = train_classifier(a, &[vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.5]], &[0, 1], &params()).unwrap();
        let pm = evaluate_discriminators(Level::Low, &[a.clone(), a], &[0.2, 0.3, 0.4]).unwrap();
        assert_eq!(pm.rows[0], pm.rows[1]);
    }

    #[test]
    fn repeated_architectures_are_refused() {
        let ds = data();
        let train = ds.split(Split::Train);
        let same = vec![Architecture { hidden: vec![6], seed: 1 }, Architecture { hidden: vec![6], seed: 2 }];
        let err = train_submodel(Level::High, &train, &same, FeatureConfig::default(), &params(), 4).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn signature_mismatch_is_reported() {
        let ds = data();
        let mid = trained(Level::Mid, &ds);
        let mut scene = ds.scenes[0].clone();
        scene.seg_maps.pop();
        assert!(matches!(mid.predict(&scene), Err(Error::Shape { .. })));
        let high = trained(Level::High, &ds);
        scene.detections[1].vocabulary_size += 1;
        assert!(matches!(high.predict(&scene), Err(Error::Shape { .. })));
        assert!(predict_low(&high, &scene).is_err());
    }

    #[test]
    fn recorded_rows_bypass_the_discriminators() {
        let ds = data();
        let low = trained(Level::Low, &ds);
        let mut scene = ds.scenes[0].clone();
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.25; 4]];
        scene.recorded_softmax.insert(Level::Low, rows.clone());
        assert_eq!(predict_low(&low, &scene).unwrap().rows, rows);
        scene.recorded_softmax.insert(Level::Low, vec![vec![0.25; 4]]);
        assert!(predict_low(&low, &scene).is_err());
    }

    #[test]
    fn accuracy_matches_confusion_trace_and_tie_rule() {
        let ds = data();
        let val = ds.split(Split::Validation);
        let sub = trained(Level::Low, &ds);
        let matrices = predict_many(&sub, &val).unwrap();
        let mut confusion = vec![vec![0usize; 4]; 4];
        for (pm, s) in matrices.iter().zip(&val) {
            confusion[s.label][argmax(&pm.rows[0])] += 1;
        }
        let trace: usize = (0..4).map(|i| confusion[i][i]).sum();
        assert_eq!(validation_accuracy(&sub, 0, &val).unwrap(), trace as f64 / val.len() as f64);

        // a uniform discriminator always answers class 0
        let uniform: Vec<PredictionMatrix> =
            val.iter().map(|_| PredictionMatrix { level: Level::Low, rows: vec![vec![0.25; 4]] }).collect();
        let zeros = val.iter().filter(|s| s.label == 0).count();
        assert_eq!(accuracies_from_matrices(&uniform, &val).unwrap()[0], zeros as f64 / val.len() as f64);
        assert_eq!(accuracies_from_matrices(&uniform, &val).unwrap()[0], 0.25);
        assert!(accuracies_from_matrices(&[], &[]).is_err());
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let ds = data();
        let val = ds.split(Split::Validation);
        let oracle: Vec<PredictionMatrix> = val
            .iter()
            .map(|s| {
                let mut row = vec![0.0; 4];
                row[s.label] = 1.0;
                PredictionMatrix { level: Level::High, rows: vec![row] }
            })
            .collect();
        assert_eq!(accuracies_from_matrices(&oracle, &val).unwrap(), vec![1.0]);
    }
}
