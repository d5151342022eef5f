//! Per-level attributed objects: the top contributors with their position,
//! color or frequency.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::HighLevelFeature;
use crate::geometry::{center_color, grid_cell_of_point, grid_position, GridCell};
use crate::image::RgbImage;
use crate::scene::{BBox, DetectionSet, Level, SegmentationMap};
use crate::submodel::SubModel;
use crate::vteg::heatmap::HeatMap;
use crate::vteg::scoring::{score_bbox, statistical_score, ObjectScore, SegmentScore};

pub const TOP_OBJECTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributedObject {
    pub level: Level,
    pub name: String,
    pub contribution_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<GridCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistical_score: Option<f64>,
}

impl AttributedObject {
    /// True when exactly the fields of its level are set.
    pub fn has_level_fields(&self) -> bool {
        let (p, c, f, s) = (
            self.position.is_some(),
            self.color.is_some(),
            self.frequency.is_some(),
            self.statistical_score.is_some(),
        );
        match self.level {
            Level::Low => p && c && !f && !s,
            Level::Mid => p && !c && !f && !s,
            Level::High => !p && !c && f && s,
        }
    }
}

/// Indices of the `TOP_OBJECTS` highest scores, ties to the earlier index,
/// zero scores dropped.
pub fn top_indices(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(TOP_OBJECTS);
    order.retain(|&i| scores[i] > 0.0);
    order
}

/// One entry per distinct name, keeping the highest score (earlier on ties).
pub fn dedup_by_name(names: &[String], scores: &[f64]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..names.len() {
        match kept.iter_mut().find(|k| names[**k] == names[i]) {
            Some(k) if scores[i] > scores[*k] => *k = i,
            Some(_) => {}
            None => kept.push(i),
        }
    }
    kept.sort_unstable();
    kept
}

/// Detection boxes of all providers in order, identical boxes of the same
/// class name kept once.
pub fn merged_boxes(detections: &[DetectionSet]) -> Vec<(String, BBox)> {
    let mut out: Vec<(String, BBox)> = Vec::new();
    for set in detections {
        for d in &set.boxes {
            if !out.iter().any(|(n, b)| n == &d.class_name && *b == d.bbox) {
                out.push((d.class_name.clone(), d.bbox));
            }
        }
    }
    out
}

/// Low-level top objects and their boxes.
pub fn low_level_top_objects(
    image: &RgbImage,
    cumulative: &HeatMap,
    m_l: usize,
    detections: &[DetectionSet],
) -> Result<Vec<(AttributedObject, BBox)>> {
    let boxes = merged_boxes(detections);
    let scores = boxes
        .iter()
        .map(|(_, b)| score_bbox(cumulative, b, m_l))
        .collect::<Result<Vec<f64>>>()?;
    Ok(top_indices(&scores)
        .into_iter()
        .map(|i| {
            let (name, bbox) = &boxes[i];
            let obj = AttributedObject {
                level: Level::Low,
                name: name.clone(),
                contribution_score: scores[i],
                position: Some(grid_position(bbox, image.width(), image.height())),
                color: Some(center_color(image, bbox).to_string()),
                frequency: None,
                statistical_score: None,
            };
            (obj, *bbox)
        })
        .collect())
}

/// Grid cell of the pixel-mass centroid of `class_id` in `map`.
pub fn segment_position(map: &SegmentationMap, class_id: u8) -> Option<GridCell> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.label(x, y) == class_id {
                sx += x as u64;
                sy += y as u64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| grid_cell_of_point(sx, sy, n, map.width(), map.height()))
}

/// Mid-level top objects, with the segment each came from.
pub fn mid_level_top_objects(
    scores: &[SegmentScore],
    maps: &[SegmentationMap],
) -> Vec<(AttributedObject, (usize, u8))> {
    let names: Vec<String> = scores.iter().map(|s| s.name.clone()).collect();
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let kept = dedup_by_name(&names, &values);
    let kept_scores: Vec<f64> = kept.iter().map(|&i| values[i]).collect();
    top_indices(&kept_scores)
        .into_iter()
        .map(|k| {
            let s = &scores[kept[k]];
            let map = maps.iter().find(|m| m.provider_id() == s.provider_id).expect("scored provider");
            let obj = AttributedObject {
                level: Level::Mid,
                name: s.name.clone(),
                contribution_score: s.score,
                position: segment_position(map, s.class_id),
                color: None,
                frequency: None,
                statistical_score: None,
            };
            (obj, (s.provider_id, s.class_id))
        })
        .collect()
}

/// Name of a high-level entry, read from the detections that produced it.
pub fn object_name(detections: &[DetectionSet], provider_id: usize, class_id: usize) -> String {
    detections
        .get(provider_id)
        .and_then(|set| set.boxes.iter().find(|d| d.class_id == class_id))
        .map(|d| d.class_name.clone())
        .unwrap_or_else(|| format!("object {provider_id}:{class_id}"))
}

/// High-level top objects; statistical scores are computed for these only.
pub fn high_level_top_objects(
    sub: &SubModel,
    hlf: &HighLevelFeature,
    scores: &[ObjectScore],
    target: usize,
    detections: &[DetectionSet],
) -> Result<Vec<AttributedObject>> {
    let names: Vec<String> = scores.iter().map(|s| object_name(detections, s.provider_id, s.class_id)).collect();
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let kept = dedup_by_name(&names, &values);
    let kept_scores: Vec<f64> = kept.iter().map(|&i| values[i]).collect();
    top_indices(&kept_scores)
        .into_iter()
        .map(|k| {
            let s = &scores[kept[k]];
            Ok(AttributedObject {
                level: Level::High,
                name: names[kept[k]].clone(),
                contribution_score: s.score,
                position: None,
                color: None,
                frequency: Some(s.count),
                statistical_score: Some(statistical_score(sub, hlf, s.index, target)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Detection;
    use crate::vteg::heatmap::HeatKind;
    use proptest::prelude::*;

    fn set(provider_id: usize, boxes: &[(&str, [u32; 4])]) -> DetectionSet {
        DetectionSet {
            provider_id,
            vocabulary_size: 4,
            boxes: boxes
                .iter()
                .enumerate()
                .map(|(i, (n, b))| Detection {
                    class_id: i % 4,
                    class_name: n.to_string(),
                    bbox: BBox::new(b[0], b[1], b[2], b[3]),
                    confidence: 0.9,
                })
                .collect(),
        }
    }

    #[test]
    fn two_boxes_come_back_ordered() {
        let mut v = vec![0.0; 100];
        for y in 0..3 {
            for x in 0..3 {
                v[y * 10 + x] = 0.7;
                v[(y + 6) * 10 + x + 6] = 0.2;
            }
        }
        let cum = HeatMap::new(10, 10, v, HeatKind::Cumulative, vec![0]).unwrap();
        let img = RgbImage::filled(10, 10, [255, 0, 0]);
        let dets = [set(0, &[("cup", [6, 6, 8, 8]), ("sofa", [0, 0, 2, 2])])];
        let top = low_level_top_objects(&img, &cum, 1, &dets).unwrap();
        let got: Vec<(&str, f64)> = top.iter().map(|(o, _)| (o.name.as_str(), o.contribution_score)).collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, "sofa");
        assert!((got[0].1 - 0.7).abs() < 1e-12 && (got[1].1 - 0.2).abs() < 1e-12);
        assert_eq!(top[0].0.position, Some(GridCell::TopLeft));
        assert_eq!(top[0].0.color.as_deref(), Some("red"));
        assert!(top[0].0.has_level_fields());
    }

    #[test]
    fn five_boxes_give_three() {
        let cum = HeatMap::new(10, 10, (0..100).map(|i| i as f64 / 100.0).collect(), HeatKind::Cumulative, vec![0]).unwrap();
        let img = RgbImage::filled(10, 10, [0, 0, 0]);
        let dets = [set(
            0,
            &[("a", [0, 0, 1, 1]), ("b", [2, 2, 3, 3]), ("c", [4, 4, 5, 5]), ("d", [6, 6, 7, 7]), ("e", [8, 8, 9, 9])],
        )];
        let top = low_level_top_objects(&img, &cum, 1, &dets).unwrap();
        let names: Vec<&str> = top.iter().map(|(o, _)| o.name.as_str()).collect();
        assert_eq!(names, ["e", "d", "c"]);
        assert!(low_level_top_objects(&img, &cum, 1, &[]).unwrap().is_empty());
    }

    #[test]
    fn zero_scores_are_dropped_and_ties_keep_order() {
        assert_eq!(top_indices(&[0.0, 0.5, 0.0, 0.5]), vec![1, 3]);
        assert_eq!(top_indices(&[0.0, 0.0]), Vec::<usize>::new());
    }

    #[test]
    fn duplicate_names_keep_the_higher_score() {
        let names: Vec<String> = ["toilet", "sink", "toilet"].iter().map(|s| s.to_string()).collect();
        assert_eq!(dedup_by_name(&names, &[0.4, 0.5, 0.9]), vec![1, 2]);
        assert_eq!(dedup_by_name(&names, &[0.9, 0.5, 0.4]), vec![0, 1]);
    }

    #[test]
    fn identical_boxes_across_providers_merge() {
        let dets = [set(0, &[("cup", [1, 1, 3, 3])]), set(1, &[("cup", [1, 1, 3, 3]), ("book", [1, 1, 3, 3])])];
        assert_eq!(merged_boxes(&dets).len(), 2);
    }

    #[test]
    fn segment_centroid_position() {
        let mut labels = vec![0u8; 81];
        for y in 6..9 {
            for x in 0..3 {
                labels[y * 9 + x] = 1;
            }
        }
        let map = SegmentationMap::new(9, 9, labels, 0, vec!["bg".into(), "rug".into()], 0).unwrap();
        assert_eq!(segment_position(&map, 1), Some(GridCell::BottomLeft));
        assert_eq!(segment_position(&map, 2), None);
    }

    proptest! {
        #[test]
        fn dedup_matches_group_max(raw in proptest::collection::vec((0usize..4, 0.0f64..1.0), 0..10)) {
            let names: Vec<String> = raw.iter().map(|(n, _)| format!("n{n}")).collect();
            let scores: Vec<f64> = raw.iter().map(|(_, s)| *s).collect();
            let kept = dedup_by_name(&names, &scores);
            let mut groups = std::collections::BTreeMap::new();
            for (n, s) in names.iter().zip(&scores) {
                let e = groups.entry(n.clone()).or_insert(f64::NEG_INFINITY);
                if *s > *e { *e = *s; }
            }
            prop_assert_eq!(kept.len(), groups.len());
            for &k in &kept {
                prop_assert_eq!(scores[k], groups[&names[k]]);
            }
        }
    }
}
