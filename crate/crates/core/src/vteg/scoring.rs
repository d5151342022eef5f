//! Importance scores: box heat, segment masking, object zeroing, quantity
//! sweeps and agreement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, VTEG};
use crate::features::{build_mlf, mask_segment, perturb_hlf, HighLevelFeature};
use crate::scene::{BBox, Level, SegmentationMap};
use crate::submodel::{PredictionMatrix, SubModel};
use crate::vteg::heatmap::HeatMap;

/// Mean heat per pixel inside `bbox`, divided by the number of summed maps.
pub fn score_bbox(cum: &HeatMap, bbox: &BBox, m_l: usize) -> Result<f64> {
    if !bbox.is_well_formed() {
        return Err(Error::data(VTEG, format!("box {bbox:?} has zero area")));
    }
    if !bbox.fits_in(cum.width(), cum.height()) {
        return Err(Error::data(VTEG, format!("box {bbox:?} leaves the {}x{} heatmap", cum.width(), cum.height())));
    }
    if m_l == 0 {
        return Err(Error::config(VTEG, "M_L must be positive"));
    }
    let mut heat = 0.0;
    for y in bbox.y0 as usize..=bbox.y1 as usize {
        for x in bbox.x0 as usize..=bbox.x1 as usize {
            heat += cum.get(x, y);
        }
    }
    Ok(heat / (bbox.area() as f64 * m_l as f64))
}

/// `(max - r_j) / (max - min)` over the responses; all zero when max = min.
pub fn minmax_scores(responses: &[f64]) -> Vec<f64> {
    let max = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = responses.iter().copied().fold(f64::INFINITY, f64::min);
    if max.partial_cmp(&min) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; responses.len()];
    }
    responses.iter().map(|r| (max - r) / (max - min)).collect()
}

/// Mean probability of `class` over the discriminators.
pub fn prediction_score(pm: &PredictionMatrix, class: usize) -> f64 {
    pm.column_mean(class)
}

pub fn agreement_percentage(pm: &PredictionMatrix, final_category: usize) -> Result<f64> {
    if final_category >= pm.n_classes() {
        return Err(Error::config(VTEG, format!("category {final_category} outside {} classes", pm.n_classes())));
    }
    Ok(100.0 * pm.column_mean(final_category))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub provider_id: usize,
    pub class_id: u8,
    pub name: String,
    /// Prediction score with the segment masked.
    pub response: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationResult<T> {
    /// Class predicted on the unperturbed input; the one whose score is tracked.
    pub target: usize,
    pub base_score: f64,
    pub items: Vec<T>,
}

/// Non-background segments in provider order, class ids ascending.
pub fn segment_candidates(maps: &[SegmentationMap]) -> Vec<(usize, u8)> {
    maps.iter()
        .flat_map(|m| {
            m.present_classes()
                .into_iter()
                .filter(move |&c| c != m.background_id())
                .map(move |c| (m.provider_id(), c))
        })
        .collect()
}

fn check_level(sub: &SubModel, level: Level) -> Result<()> {
    if sub.level() != level {
        return Err(Error::config(VTEG, format!("expected a {level} sub-model, got {}", sub.level())));
    }
    Ok(())
}

/// Masks every non-background segment in turn and scores the drop in the
/// mid-level prediction score.
pub fn mid_level_scores(sub: &SubModel, maps: &[SegmentationMap]) -> Result<PerturbationResult<SegmentScore>> {
    check_level(sub, Level::Mid)?;
    let base = sub.predict_mlf(&build_mlf(maps)?)?;
    let target = base.predicted_class();
    let candidates = segment_candidates(maps);
    let responses = candidates
        .par_iter()
        .map(|&(p, c)| {
            let masked = mask_segment(maps, p, c)?;
            Ok(prediction_score(&sub.predict_mlf(&build_mlf(&masked)?)?, target))
        })
        .collect::<Result<Vec<f64>>>()?;
    let scores = minmax_scores(&responses);
    let items = candidates
        .iter()
        .zip(responses.iter().zip(scores))
        .map(|(&(p, c), (&response, score))| {
            let map = maps.iter().find(|m| m.provider_id() == p).expect("candidate provider");
            SegmentScore { provider_id: p, class_id: c, name: map.class_name(c).to_string(), response, score }
        })
        .collect();
    Ok(PerturbationResult { target, base_score: prediction_score(&base, target), items })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    /// Position in the high-level feature.
    pub index: usize,
    pub provider_id: usize,
    pub class_id: usize,
    pub count: u32,
    pub response: f64,
    pub score: f64,
}

/// Zeroes every present object in turn and scores the drop in the
/// high-level prediction score.
pub fn high_contribution_scores(sub: &SubModel, hlf: &HighLevelFeature) -> Result<PerturbationResult<ObjectScore>> {
    check_level(sub, Level::High)?;
    let base = sub.predict_hlf(hlf)?;
    let target = base.predicted_class();
    let present: Vec<usize> = (0..hlf.len()).filter(|&i| hlf.counts()[i] > 0).collect();
    let responses = present
        .par_iter()
        .map(|&i| {
            let (p, c) = hlf.address_of(i).expect("index in range");
            Ok(prediction_score(&sub.predict_hlf(&perturb_hlf(hlf, p, c, 0)?)?, target))
        })
        .collect::<Result<Vec<f64>>>()?;
    let scores = minmax_scores(&responses);
    let items = present
        .iter()
        .zip(responses.iter().zip(scores))
        .map(|(&i, (&response, score))| {
            let (provider_id, class_id) = hlf.address_of(i).expect("index in range");
            ObjectScore { index: i, provider_id, class_id, count: hlf.counts()[i], response, score }
        })
        .collect();
    Ok(PerturbationResult { target, base_score: prediction_score(&base, target), items })
}

/// Quantity scores of the object at `index` for every count `0..=m_i`,
/// tracking class `target`.
pub fn quantity_scores(sub: &SubModel, hlf: &HighLevelFeature, index: usize, target: usize) -> Result<Vec<f64>> {
    check_level(sub, Level::High)?;
    let (p, c) = hlf
        .address_of(index)
        .ok_or_else(|| Error::data(VTEG, format!("object index {index} outside {} entries", hlf.len())))?;
    let m = hlf.counts()[index];
    let responses = (0..=m)
        .map(|k| Ok(prediction_score(&sub.predict_hlf(&perturb_hlf(hlf, p, c, k)?)?, target)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(minmax_scores(&responses))
}

/// Quantity score of one count `c_k`.
pub fn quantity_score(sub: &SubModel, hlf: &HighLevelFeature, index: usize, target: usize, c_k: u32) -> Result<f64> {
    let table = quantity_scores(sub, hlf, index, target)?;
    table
        .get(c_k as usize)
        .copied()
        .ok_or_else(|| Error::data(VTEG, format!("count {c_k} outside 0..={}", table.len() - 1)))
}

/// Mean absolute difference of successive quantity scores.
pub fn statistical_score_from_table(table: &[f64]) -> Result<f64> {
    let m = table.len().saturating_sub(1);
    if m == 0 {
        return Err(Error::data(VTEG, "statistical score needs an object present at least once"));
    }
    Ok(table.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / m as f64)
}

pub fn statistical_score(sub: &SubModel, hlf: &HighLevelFeature, index: usize, target: usize) -> Result<f64> {
    statistical_score_from_table(&quantity_scores(sub, hlf, index, target)?)
}
