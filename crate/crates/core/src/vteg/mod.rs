//! Visual and textual explanations of ensemble predictions.
//!
//! Low level: occlusion heatmaps of the pixel discriminators, summed, then
//! averaged inside each detection box. Mid level: masking one segment at a
//! time. High level: zeroing one object count at a time, plus a sweep over
//! counts for the top objects.

pub mod attributes;
pub mod heatmap;
pub mod render;
pub mod scoring;

use serde::{Deserialize, Serialize};

use crate::ensemble::{predict_final, EnsembleModel};
use crate::error::{Error, Result, VTEG};
use crate::features::build_hlf;
use crate::image::RgbImage;
use crate::scene::{Level, SceneInstance};
use crate::submodel::PredictionMatrix;

use attributes::{high_level_top_objects, low_level_top_objects, mid_level_top_objects, AttributedObject};
use heatmap::{cumulative_heatmap, occlusion_heatmap, HeatKind, HeatMap, OcclusionConfig};
use render::{render_masked_segmentation, render_overlay, render_text};
use scoring::{agreement_percentage, high_contribution_scores, mid_level_scores};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelExplanation {
    pub level: Level,
    /// Percentage in [0, 100].
    pub agreement: f64,
    pub objects: Vec<AttributedObject>,
}

/// The structured part of an explanation, written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub scene_id: u32,
    pub final_category: String,
    pub final_index: usize,
    pub meta_softmax: Vec<f64>,
    pub levels: Vec<LevelExplanation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub record: ExplanationRecord,
    pub text: String,
    pub cumulative: HeatMap,
    /// Number of single heatmaps summed into `cumulative`.
    pub m_l: usize,
    pub overlay: RgbImage,
    pub masked_segmentation: RgbImage,
    pub matrices: std::collections::BTreeMap<Level, PredictionMatrix>,
}

/// Single occlusion heatmaps of every low-level discriminator for `target`.
pub fn low_level_heatmaps(
    model: &EnsembleModel,
    image: &RgbImage,
    target: usize,
    config: OcclusionConfig,
) -> Result<Vec<HeatMap>> {
    let sub = model
        .active_submodel(Level::Low)
        .ok_or_else(|| Error::config(VTEG, "low level is not active"))?;
    let featurize = |img: &RgbImage| sub.image_features(img);
    sub.discriminators()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut hm = occlusion_heatmap(d, image, &featurize, target, config)?;
            hm.sources = vec![i];
            Ok(hm)
        })
        .collect()
}

/// Runs the ensemble on `scene` and explains every active level.
pub fn explain_scene(model: &EnsembleModel, scene: &SceneInstance, occlusion: Option<OcclusionConfig>) -> Result<Explanation> {
    let fp = predict_final(model, scene)?;
    let category = model
        .categories
        .get(fp.category)
        .cloned()
        .ok_or_else(|| Error::data(VTEG, format!("category index {} has no name", fp.category)))?;
    let (w, h) = (scene.image.width(), scene.image.height());
    let mut levels = Vec::new();
    let mut cumulative = HeatMap::zeros(w, h, HeatKind::Cumulative);
    let mut m_l = 0;
    let mut boxes = Vec::new();
    let mut keep = Vec::new();

    for level in model.active.levels() {
        let pm = &fp.matrices[&level];
        let agreement = agreement_percentage(pm, fp.category)?;
        let objects = match level {
            Level::Low => {
                let config = occlusion.unwrap_or_else(|| OcclusionConfig::for_image(w, h));
                let singles = low_level_heatmaps(model, &scene.image, pm.predicted_class(), config)?;
                m_l = singles.len();
                cumulative = cumulative_heatmap(&singles)?;
                let top = low_level_top_objects(&scene.image, &cumulative, m_l, &scene.detections)?;
                boxes = top.iter().map(|(_, b)| *b).collect();
                top.into_iter().map(|(o, _)| o).collect()
            }
            Level::Mid => {
                let sub = model.active_submodel(Level::Mid).expect("active level");
                let scores = mid_level_scores(sub, &scene.seg_maps)?;
                let top = mid_level_top_objects(&scores.items, &scene.seg_maps);
                keep = top.iter().map(|(_, seg)| *seg).collect();
                top.into_iter().map(|(o, _)| o).collect()
            }
            Level::High => {
                let sub = model.active_submodel(Level::High).expect("active level");
                let hlf = build_hlf(&scene.detections)?;
                let scores = high_contribution_scores(sub, &hlf)?;
                high_level_top_objects(sub, &hlf, &scores.items, scores.target, &scene.detections)?
            }
        };
        levels.push(LevelExplanation { level, agreement, objects });
    }

    let text = render_text(&category, &levels);
    Ok(Explanation {
        record: ExplanationRecord {
            scene_id: scene.id,
            final_category: category,
            final_index: fp.category,
            meta_softmax: fp.meta_softmax,
            levels,
        },
        text,
        cumulative,
        m_l,
        overlay: render_overlay(&scene.image, &boxes),
        masked_segmentation: render_masked_segmentation(&scene.seg_maps, &keep),
        matrices: fp.matrices,
    })
}
