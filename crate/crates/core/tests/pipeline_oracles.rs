use std::sync::OnceLock;

use entri_core::classifier::{Classifier, Dense, TrainParams};
use entri_core::dataset::Dataset;
use entri_core::ensemble::{
    evaluate, predict_final, train_ensemble, EnsembleConfig, EnsembleModel, LevelConfig, LevelSet, MetaConfig, ALPHA_GRID,
};
use entri_core::features::HighLevelFeature;
use entri_core::scene::{Level, Split};
use entri_core::submodel::{Architecture, FeatureConfig, InputSignature, SubModel};
use entri_core::vteg::explain_scene;
use entri_core::vteg::render::{artifact_names, check_grammar, write_explanation};
use entri_core::vteg::scoring::{high_contribution_scores, statistical_score};
use entri_core::world::small_world;

fn level(seed: u64) -> LevelConfig {
    LevelConfig {
        architectures: vec![Architecture { hidden: vec![8], seed }, Architecture { hidden: vec![12], seed: seed + 1 }],
        train: TrainParams { epochs: 15, batch_size: 16, learning_rate: 0.05, rng_seed: 7, weight_decay: 0.0 },
    }
}

fn trained() -> &'static (Dataset, EnsembleModel) {
    static MODEL: OnceLock<(Dataset, EnsembleModel)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let data = Dataset::synthetic(&small_world(4, 24), 10, [0.5, 0.3, 0.2]).unwrap();
        let config = EnsembleConfig {
            active_levels: LevelSet::ALL,
            features: FeatureConfig::default(),
            low: level(1),
            mid: level(11),
            high: level(21),
            meta: MetaConfig {
                hidden_multiplier: 2,
                seed: 3,
                train: TrainParams { epochs: 40, batch_size: 8, learning_rate: 0.1, rng_seed: 5, weight_decay: 0.0 },
                alpha_grid: ALPHA_GRID.to_vec(),
            },
        };
        let (model, _) = train_ensemble(&data, &config).unwrap();
        (data, model)
    })
}

/// Dense forward pass: tanh on hidden layers, softmax on the last.
fn forward_by_hand(layers: &[Dense], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        let mut z: Vec<f64> = (0..l.outputs)
            .map(|o| l.bias[o] + (0..l.inputs).map(|j| l.weights[o * l.inputs + j] * a[j]).sum::<f64>())
            .collect();
        if i + 1 < layers.len() {
            z.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            z.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
        }
        a = z;
    }
    a
}

#[test]
fn final_prediction_matches_a_hand_built_meta_input() {
    let (data, model) = trained();
    for s in data.split(Split::Test) {
        let fp = predict_final(model, s).unwrap();
        let mut input = Vec::new();
        for level in Level::ALL {
            let sub = &model.submodels[&level];
            let w = &model.weights[&level].weights;
            for (m, d) in sub.discriminators().iter().enumerate() {
                let row = d.predict_proba(&sub.scene_features(s).unwrap()).unwrap();
                input.extend(row.iter().map(|p| w[m] * p * model.meta_scale));
            }
        }
        let probs = forward_by_hand(model.meta.layers(), &input);
        for (a, b) in probs.iter().zip(&fp.meta_softmax) {
            assert!((a - b).abs() < 1e-12, "scene {}: {a} vs {b}", s.id);
        }
        let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
        assert_eq!(fp.category, best);
    }
}

#[test]
fn evaluation_invariants() {
    let (data, model) = trained();
    let n = model.n_categories();
    let ks: Vec<usize> = (1..=n).collect();
    let m = evaluate(model, &data.split(Split::Test), &ks).unwrap();
    assert_eq!(m.top(n), 1.0);
    assert!(ks.windows(2).all(|k| m.top(k[0]) <= m.top(k[1])));
    let trace: u64 = (0..n).map(|i| m.confusion[i][i]).sum();
    let total: u64 = m.confusion.iter().flatten().sum();
    assert_eq!(total as usize, m.n_scenes);
    assert_eq!(trace as f64 / total as f64, m.top(1));
}

#[test]
fn explanations_conform_and_write_five_files() {
    let (data, model) = trained();
    let dir = tempfile::tempdir().unwrap();
    for s in data.split(Split::Test).into_iter().take(4) {
        let e = explain_scene(model, s, None).unwrap();
        check_grammar(&e.text).unwrap();
        assert_eq!(e.record.levels.len(), 3);
        for lvl in &e.record.levels {
            let oracle = 100.0 * e.matrices[&lvl.level].column_mean(e.record.final_index);
            assert!((lvl.agreement - oracle).abs() < 1e-12);
            assert!(lvl.objects.len() <= 3);
            assert!(lvl.objects.windows(2).all(|p| p[0].contribution_score >= p[1].contribution_score));
            assert!(lvl.objects.iter().all(|o| o.contribution_score > 0.0 && o.has_level_fields()));
        }
        let paths = write_explanation(&e, dir.path()).unwrap();
        let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, artifact_names(s.id));
        assert!(paths.iter().all(|p| p.is_file()));
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4 * 5);
}

/// One linear layer: class 0's logit is `weights . x`, class 1's is zero.
fn linear_high(weights: &[f64], sizes: Vec<usize>) -> SubModel {
    let n_in = weights.len();
    let mut w = weights.to_vec();
    w.extend(std::iter::repeat_n(0.0, n_in));
    let layer = Dense { inputs: n_in, outputs: 2, weights: w, bias: vec![0.0, 0.0] };
    let clf = Classifier::from_layers(vec![layer], 0, true).unwrap();
    SubModel::new(vec![clf], FeatureConfig::default(), InputSignature::High { vocabulary_sizes: sizes }, 2).unwrap()
}

#[test]
fn an_ignored_object_scores_the_minimum() {
    // object 2 has no incoming weight; every other present object pushes class 0 up
    let sub = linear_high(&[0.4, 0.3, 0.0, 0.2, 0.5], vec![3, 2]);
    let hlf = HighLevelFeature::from_counts(vec![vec![1, 2, 3], vec![1, 0]]);
    let res = high_contribution_scores(&sub, &hlf).unwrap();
    assert_eq!(res.target, 0);
    let ignored = res.items.iter().find(|o| o.index == 2).unwrap();
    let base = sub.predict_hlf(&hlf).unwrap().column_mean(0);
    assert_eq!(ignored.response, base);
    let min = res.items.iter().map(|o| o.score).fold(f64::INFINITY, f64::min);
    assert_eq!(ignored.score, min);
    assert_eq!(ignored.score, 0.0);
}

#[test]
fn monotone_count_response_gives_one_over_m() {
    let sub = linear_high(&[0.7, -0.2, 0.1], vec![3]);
    for m in 1..=6u32 {
        let hlf = HighLevelFeature::from_counts(vec![vec![m, 2, 1]]);
        let s = statistical_score(&sub, &hlf, 0, 0).unwrap();
        assert!((s - 1.0 / m as f64).abs() < 1e-12, "m={m}: {s}");
    }
}
