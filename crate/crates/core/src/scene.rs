//! Scene and provider-output types.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SCENE};
use crate::image::RgbImage;

/// Representation level of a sub-model. Ordering is the fixed
/// concatenation order low, mid, high.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];

    pub fn name(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Mid => "mid",
            Level::High => "high",
        }
    }

    /// Position in [`Level::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.name() == s)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" | "val" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Axis-aligned box with inclusive integer pixel corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    /// Pixel count of the inclusive region.
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_well_formed(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        (self.x1 as usize) < width && (self.y1 as usize) < height
    }

    pub fn intersects(&self, other: &BBox, margin: u32) -> bool {
        self.x0 <= other.x1 + margin
            && other.x0 <= self.x1 + margin
            && self.y0 <= other.y1 + margin
            && other.y0 <= self.y1 + margin
    }
}

/// Pixel-level label raster produced by one segmentation provider.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    provider_id: usize,
    class_names: Vec<String>,
    background_id: u8,
}

impl SegmentationMap {
    /// Class ids index `class_names`; every label and the background id
    /// must name a class.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        provider_id: usize,
        class_names: Vec<String>,
        background_id: u8,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::shape(
                SCENE,
                format!("provider {provider_id}: {} labels for a {width}x{height} map", labels.len()),
            ));
        }
        if background_id as usize >= class_names.len() {
            return Err(Error::data(
                SCENE,
                format!("provider {provider_id}: background id {background_id} has no class name"),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::data(
                SCENE,
                format!("provider {provider_id}: label {bad} has no class name"),
            ));
        }
        Ok(Self { width, height, labels, provider_id, class_names, background_id })
    }

    /// A map with every pixel set to the background class.
    pub fn background(
        width: usize,
        height: usize,
        provider_id: usize,
        class_names: Vec<String>,
        background_id: u8,
    ) -> Result<Self> {
        Self::new(width, height, vec![background_id; width * height], provider_id, class_names, background_id)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn provider_id(&self) -> usize {
        self.provider_id
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_name(&self, id: u8) -> &str {
        &self.class_names[id as usize]
    }

    pub fn background_id(&self) -> u8 {
        self.background_id
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn pixel_count(&self, class_id: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class_id).count()
    }

    /// Distinct class ids present in the map, ascending.
    pub fn present_classes(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&i| seen[i as usize]).collect()
    }

    /// Copy with every pixel of `class_id` relabelled as `to`.
    pub(crate) fn relabelled(&self, class_id: u8, to: u8) -> Self {
        let labels = self
            .labels
            .iter()
            .map(|&l| if l == class_id { to } else { l })
            .collect();
        Self { labels, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub class_name: String,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Boxes reported by one detection provider for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub provider_id: usize,
    pub vocabulary_size: usize,
    pub boxes: Vec<Detection>,
}

impl DetectionSet {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for d in &self.boxes {
            if !d.bbox.is_well_formed() {
                return Err(Error::data(
                    SCENE,
                    format!("provider {}: degenerate box {:?}", self.provider_id, d.bbox),
                ));
            }
            if !d.bbox.fits_in(width, height) {
                return Err(Error::data(
                    SCENE,
                    format!("provider {}: box {:?} leaves the {width}x{height} image", self.provider_id, d.bbox),
                ));
            }
            if d.class_id >= self.vocabulary_size {
                return Err(Error::data(
                    SCENE,
                    format!(
                        "provider {}: class id {} outside vocabulary of {}",
                        self.provider_id, d.class_id, self.vocabulary_size
                    ),
                ));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::data(
                    SCENE,
                    format!("provider {}: confidence {} outside [0,1]", self.provider_id, d.confidence),
                ));
            }
        }
        Ok(())
    }
}

/// One scene: the image, every provider's output for it, and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneInstance {
    pub id: u32,
    pub image: RgbImage,
    pub seg_maps: Vec<SegmentationMap>,
    pub detections: Vec<DetectionSet>,
    pub label: usize,
    pub split: Split,
    /// Externally recorded softmax rows per level; when present they stand
    /// in for discriminator evaluation.
    pub recorded_softmax: BTreeMap<Level, Vec<Vec<f64>>>,
}

impl SceneInstance {
    pub fn validate(&self, n_categories: usize) -> Result<()> {
        let ctx = |msg: String| Error::data(SCENE, format!("scene {}: {msg}", self.id));
        if self.label >= n_categories {
            return Err(ctx(format!("label {} >= {n_categories} categories", self.label)));
        }
        let (w, h) = (self.image.width(), self.image.height());
        for m in &self.seg_maps {
            if m.width() != w || m.height() != h {
                return Err(ctx(format!(
                    "segmentation map of provider {} is {}x{}, image is {w}x{h}",
                    m.provider_id(),
                    m.width(),
                    m.height()
                )));
            }
        }
        for d in &self.detections {
            d.validate(w, h).map_err(|e| ctx(e.to_string()))?;
        }
        for (level, rows) in &self.recorded_softmax {
            for row in rows {
                let sum: f64 = row.iter().sum();
                if row.len() != n_categories || (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| *p < 0.0) {
                    return Err(ctx(format!("recorded {level} softmax row is not a distribution over {n_categories} classes")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn segmentation_map_rejects_unknown_labels() {
        let err = SegmentationMap::new(2, 1, vec![0, 3], 0, names(2), 0).unwrap_err();
        assert!(err.to_string().contains("label 3"));
        assert!(SegmentationMap::new(2, 1, vec![0, 1], 0, names(2), 5).is_err());
        assert!(SegmentationMap::new(2, 2, vec![0, 1], 0, names(2), 0).is_err());
    }

    #[test]
    fn present_classes_are_sorted_and_distinct() {
        let m = SegmentationMap::new(3, 2, vec![2, 0, 2, 1, 1, 2], 0, names(3), 0).unwrap();
        assert_eq!(m.present_classes(), vec![0, 1, 2]);
        assert_eq!(m.pixel_count(2), 3);
    }

    #[test]
    fn detection_validation() {
        let mut set = DetectionSet {
            provider_id: 0,
            vocabulary_size: 2,
            boxes: vec![Detection {
                class_id: 1,
                class_name: "b".into(),
                bbox: BBox::new(0, 0, 3, 3),
                confidence: 0.5,
            }],
        };
        assert!(set.validate(4, 4).is_ok());
        assert!(set.validate(3, 4).is_err());
        set.boxes[0].class_id = 2;
        assert!(set.validate(4, 4).is_err());
        set.boxes[0].class_id = 0;
        set.boxes[0].bbox = BBox::new(2, 0, 2, 3);
        assert!(set.validate(4, 4).is_err());
    }

    #[test]
    fn bbox_area_is_inclusive() {
        assert_eq!(BBox::new(0, 0, 2, 2).area(), 9);
        assert!(BBox::new(0, 0, 2, 2).intersects(&BBox::new(3, 0, 5, 2), 1));
        assert!(!BBox::new(0, 0, 2, 2).intersects(&BBox::new(4, 0, 5, 2), 1));
    }
}
