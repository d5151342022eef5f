//! Deterministic synthetic scene generator with exact provider ground truth.
//!
//! A world is a set of categories, each defined by a noisy background
//! palette and a distribution over object placements. Simulated segmentation
//! and detection providers each see a subset of the object types under their
//! own vocabulary, standing in for pretrained models.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::named_color;
use crate::error::{Error, Result, SCENE};
use crate::image::RgbImage;
use crate::scene::{BBox, Detection, DetectionSet, SceneInstance, SegmentationMap, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundPalette {
    pub mean: [u8; 3],
    /// Per-channel uniform noise amplitude.
    pub noise: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectType {
    pub name: String,
    pub shape: Shape,
    /// Bounding-box width and height in pixels.
    pub size: [u32; 2],
    /// Named colors an instance may be painted with.
    pub colors: Vec<String>,
}

/// Fractional sub-rectangle of the image that must contain an object's box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub object: String,
    pub min: u32,
    pub max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub background: BackgroundPalette,
    pub objects: Vec<Occurrence>,
}

/// A simulated segmentation model: object type name -> class name.
/// Object types without an entry are invisible to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSegProvider {
    pub name: String,
    pub class_names: Vec<String>,
    pub background_id: u8,
    pub labels: BTreeMap<String, String>,
}

/// A simulated object detector: object type name -> vocabulary word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDetProvider {
    pub name: String,
    pub vocabulary: Vec<String>,
    pub labels: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionKind {
    /// Same background palette, different object distributions.
    SharedBackground,
    /// Same object distributions, different background palettes.
    SharedObjects,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusablePair {
    pub a: String,
    pub b: String,
    pub kind: ConfusionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub image_size: [usize; 2],
    pub rng_seed: u64,
    pub categories: Vec<CategorySpec>,
    pub object_types: Vec<ObjectType>,
    pub segmentation_providers: Vec<SimulatedSegProvider>,
    pub detection_providers: Vec<SimulatedDetProvider>,
    pub confusable_pairs: Vec<ConfusablePair>,
}

/// Provider metadata shared by every scene of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRegistry {
    pub segmentation: Vec<SegProviderInfo>,
    pub detection: Vec<DetProviderInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegProviderInfo {
    pub name: String,
    pub class_names: Vec<String>,
    pub background_id: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetProviderInfo {
    pub name: String,
    pub vocabulary: Vec<String>,
}

impl ProviderRegistry {
    pub fn vocabulary_sizes(&self) -> Vec<usize> {
        self.detection.iter().map(|d| d.vocabulary.len()).collect()
    }
}

/// Fraction of the image area the largest possible object set may cover.
const MAX_OBJECT_COVERAGE: f64 = 0.45;
const PLACEMENT_ATTEMPTS: usize = 2000;

impl SyntheticWorldSpec {
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn registry(&self) -> ProviderRegistry {
        ProviderRegistry {
            segmentation: self
                .segmentation_providers
                .iter()
                .map(|p| SegProviderInfo {
                    name: p.name.clone(),
                    class_names: p.class_names.clone(),
                    background_id: p.background_id,
                })
                .collect(),
            detection: self
                .detection_providers
                .iter()
                .map(|p| DetProviderInfo { name: p.name.clone(), vocabulary: p.vocabulary.clone() })
                .collect(),
        }
    }

    fn object_index(&self, name: &str) -> Option<usize> {
        self.object_types.iter().position(|o| o.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(SCENE, msg));
        let [w, h] = self.image_size;
        if w < 3 || h < 3 {
            return bad(format!("image size {w}x{h} is too small"));
        }
        if self.categories.is_empty() {
            return bad("world has no categories".into());
        }
        let names: BTreeSet<&str> = self.categories.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.categories.len() {
            return bad("category names are not unique".into());
        }
        for o in &self.object_types {
            let [ow, oh] = o.size;
            if ow < 2 || oh < 2 {
                return bad(format!("object '{}' must be at least 2x2", o.name));
            }
            if ow as usize > w || oh as usize > h {
                return bad(format!("object '{}' ({ow}x{oh}) cannot fit inside {w}x{h}", o.name));
            }
            if o.colors.is_empty() {
                return bad(format!("object '{}' has no colors", o.name));
            }
            if let Some(c) = o.colors.iter().find(|c| named_color(c).is_none()) {
                return bad(format!("object '{}' uses unknown color '{c}'", o.name));
            }
        }
        for cat in &self.categories {
            let mut max_area = 0.0;
            for occ in &cat.objects {
                let Some(oi) = self.object_index(&occ.object) else {
                    return bad(format!("category '{}' references unknown object '{}'", cat.name, occ.object));
                };
                if occ.min > occ.max {
                    return bad(format!("category '{}': {} count range {}..{}", cat.name, occ.object, occ.min, occ.max));
                }
                let [ow, oh] = self.object_types[oi].size;
                if let Some(r) = &occ.region {
                    let (x0, x1, y0, y1) = region_pixels(r, w, h);
                    if x1 < x0 + ow as usize || y1 < y0 + oh as usize {
                        return bad(format!(
                            "category '{}': region for '{}' cannot fit a {ow}x{oh} object",
                            cat.name, occ.object
                        ));
                    }
                }
                max_area += (occ.max as f64) * ((ow + 1) * (oh + 1)) as f64;
            }
            if max_area > MAX_OBJECT_COVERAGE * (w * h) as f64 {
                return bad(format!(
                    "category '{}': objects cannot fit inside {w}x{h} without overlap",
                    cat.name
                ));
            }
        }
        for p in &self.segmentation_providers {
            if p.class_names.len() > 256 || p.background_id as usize >= p.class_names.len() {
                return bad(format!("segmentation provider '{}' has an invalid class table", p.name));
            }
            for (obj, class) in &p.labels {
                if self.object_index(obj).is_none() || !p.class_names.contains(class) {
                    return bad(format!("segmentation provider '{}' maps '{obj}' to unknown '{class}'", p.name));
                }
                if p.class_names[p.background_id as usize] == *class {
                    return bad(format!("segmentation provider '{}' labels '{obj}' as background", p.name));
                }
            }
        }
        for p in &self.detection_providers {
            for (obj, word) in &p.labels {
                if self.object_index(obj).is_none() || !p.vocabulary.contains(word) {
                    return bad(format!("detection provider '{}' maps '{obj}' to unknown '{word}'", p.name));
                }
            }
        }
        let mut kinds = BTreeSet::new();
        for pair in &self.confusable_pairs {
            let find = |n: &str| self.categories.iter().find(|c| c.name == n);
            let (Some(a), Some(b)) = (find(&pair.a), find(&pair.b)) else {
                return bad(format!("confusable pair {}/{} names unknown categories", pair.a, pair.b));
            };
            let same_bg = a.background == b.background;
            let same_obj = a.objects == b.objects;
            let consistent = match pair.kind {
                ConfusionKind::SharedBackground => same_bg && !same_obj,
                ConfusionKind::SharedObjects => same_obj && !same_bg,
            };
            if !consistent {
                return bad(format!("confusable pair {}/{} does not match its {:?} flag", pair.a, pair.b, pair.kind));
            }
            kinds.insert(pair.kind as u8);
        }
        if kinds.len() != 2 {
            return bad("world needs at least one shared-background and one shared-objects confusable pair".into());
        }
        Ok(())
    }
}

fn region_pixels(r: &Region, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let px = |f: f64, size: usize| ((f.clamp(0.0, 1.0) * size as f64).round() as usize).min(size);
    (px(r.x[0], w), px(r.x[1], w), px(r.y[0], h), px(r.y[1], h))
}

/// Scenes per category assigned to (train, validation, test).
pub fn split_counts(n_per_category: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((n_per_category as f64 * ratios[0]).round() as usize).min(n_per_category);
    let val = ((n_per_category as f64 * ratios[1]).round() as usize).min(n_per_category - train);
    [train, val, n_per_category - train - val]
}

/// Generates `n_per_category` scenes for every category. Scene ids are
/// category-major; within a category the first scenes form the training
/// split, then validation, then test.
pub fn generate_dataset(
    spec: &SyntheticWorldSpec,
    n_per_category: usize,
    split_ratios: [f64; 3],
) -> Result<Vec<SceneInstance>> {
    spec.validate()?;
    if n_per_category < 5 {
        return Err(Error::config(SCENE, format!("need at least 5 scenes per category, got {n_per_category}")));
    }
    if split_ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::config(SCENE, format!("split ratios {split_ratios:?} must be in [0,1] and sum to 1")));
    }
    let [n_train, n_val, _] = split_counts(n_per_category, split_ratios);
    let total = spec.n_categories() * n_per_category;
    (0..total)
        .into_par_iter()
        .map(|id| {
            let (label, i) = (id / n_per_category, id % n_per_category);
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            generate_scene(spec, id as u32, label, split)
        })
        .collect()
}

struct Placed {
    object: usize,
    bbox: BBox,
    color: [u8; 3],
}

fn generate_scene(spec: &SyntheticWorldSpec, id: u32, label: usize, split: Split) -> Result<SceneInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(id as u64);
    let [w, h] = spec.image_size;
    let cat = &spec.categories[label];

    let mut image = RgbImage::filled(w, h, [0, 0, 0]);
    let noise = cat.background.noise as i32;
    for y in 0..h {
        for x in 0..w {
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let jitter = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
                *v = (cat.background.mean[c] as i32 + jitter).clamp(0, 255) as u8;
            }
            image.put(x, y, px);
        }
    }

    let mut placed: Vec<Placed> = Vec::new();
    for occ in &cat.objects {
        let oi = spec.object_index(&occ.object).expect("validated");
        let obj = &spec.object_types[oi];
        let count = rng.random_range(occ.min..=occ.max);
        let full = Region { x: [0.0, 1.0], y: [0.0, 1.0] };
        let (rx0, rx1, ry0, ry1) = region_pixels(occ.region.as_ref().unwrap_or(&full), w, h);
        let [ow, oh] = obj.size;
        for _ in 0..count {
            let mut bbox = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let x0 = rng.random_range(rx0..=rx1 - ow as usize) as u32;
                let y0 = rng.random_range(ry0..=ry1 - oh as usize) as u32;
                let candidate = BBox::new(x0, y0, x0 + ow - 1, y0 + oh - 1);
                if placed.iter().all(|p| !p.bbox.intersects(&candidate, 1)) {
                    bbox = Some(candidate);
                    break;
                }
            }
            let bbox = bbox.ok_or_else(|| {
                Error::data(SCENE, format!("scene {id}: could not place '{}' without overlap", obj.name))
            })?;
            let color_name = obj.colors.choose(&mut rng).expect("validated non-empty");
            placed.push(Placed { object: oi, bbox, color: named_color(color_name).expect("validated") });
        }
    }

    let mut seg_labels: Vec<Vec<u8>> = spec
        .segmentation_providers
        .iter()
        .map(|p| vec![p.background_id; w * h])
        .collect();
    let seg_ids: Vec<Vec<Option<u8>>> = spec
        .segmentation_providers
        .iter()
        .map(|p| {
            spec.object_types
                .iter()
                .map(|o| {
                    p.labels
                        .get(&o.name)
                        .and_then(|c| p.class_names.iter().position(|n| n == c))
                        .map(|i| i as u8)
                })
                .collect()
        })
        .collect();
    for p in &placed {
        let obj = &spec.object_types[p.object];
        for (x, y) in shape_pixels(obj.shape, &p.bbox) {
            image.put(x, y, p.color);
            for (labels, ids) in seg_labels.iter_mut().zip(&seg_ids) {
                if let Some(id) = ids[p.object] {
                    labels[y * w + x] = id;
                }
            }
        }
    }

    let seg_maps = spec
        .segmentation_providers
        .iter()
        .zip(seg_labels)
        .enumerate()
        .map(|(pi, (p, labels))| SegmentationMap::new(w, h, labels, pi, p.class_names.clone(), p.background_id))
        .collect::<Result<Vec<_>>>()?;

    let detections = spec
        .detection_providers
        .iter()
        .enumerate()
        .map(|(pi, prov)| {
            let boxes = placed
                .iter()
                .filter_map(|p| {
                    let word = prov.labels.get(&spec.object_types[p.object].name)?;
                    let class_id = prov.vocabulary.iter().position(|v| v == word)?;
                    Some((class_id, word, p.bbox))
                })
                .map(|(class_id, word, bbox)| Detection {
                    class_id,
                    class_name: word.clone(),
                    bbox,
                    confidence: (rng.random_range(600..=1000) as f64) / 1000.0,
                })
                .collect();
            DetectionSet { provider_id: pi, vocabulary_size: prov.vocabulary.len(), boxes }
        })
        .collect();

    Ok(SceneInstance {
        id,
        image,
        seg_maps,
        detections,
        label,
        split,
        recorded_softmax: BTreeMap::new(),
    })
}

/// Pixels covered by a shape inscribed in `bbox`. Always includes the
/// integer centroid.
pub fn shape_pixels(shape: Shape, bbox: &BBox) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(bbox.area() as usize);
    let cx = (bbox.x0 + bbox.x1) as f64 / 2.0;
    let cy = (bbox.y0 + bbox.y1) as f64 / 2.0;
    let rx = bbox.width() as f64 / 2.0;
    let ry = bbox.height() as f64 / 2.0;
    for y in bbox.y0..=bbox.y1 {
        for x in bbox.x0..=bbox.x1 {
            let inside = match shape {
                Shape::Rectangle => true,
                Shape::Ellipse => {
                    let dx = (x as f64 - cx) / rx;
                    let dy = (y as f64 - cy) / ry;
                    dx * dx + dy * dy <= 1.0
                }
            };
            if inside {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

/// The world used for the shipped ablation reference.
///
/// Eight categories form a 2x2x2 design over three factors:
/// background palette (visible in pixels only), which side the sofa and
/// cabinet stand on (visible in segmentation layout only; both are the same
/// size and color distribution), and whether cups or books are present
/// (visible to detectors only; segmenters do not label them). Chairs and
/// plants are shared distractors.
pub fn reference_world() -> SyntheticWorldSpec {
    let warm = BackgroundPalette { mean: [205, 185, 150], noise: 24 };
    let cool = BackgroundPalette { mean: [60, 80, 115], noise: 24 };
    let paint: Vec<String> = ["red", "lime", "blue", "yellow", "magenta", "cyan", "white", "black", "teal", "purple"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let object = |name: &str, shape, size| ObjectType { name: name.into(), shape, size, colors: paint.clone() };
    let left = Region { x: [0.0, 0.5], y: [0.0, 1.0] };
    let right = Region { x: [0.5, 1.0], y: [0.0, 1.0] };
    let occ = |object: &str, min, max, region: Option<Region>| Occurrence { object: object.into(), min, max, region };

    let mut categories = Vec::new();
    let names = [
        "living_room", "lounge", "study", "library", "kitchen", "dining_room", "office", "waiting_room",
    ];
    for (i, name) in names.iter().enumerate() {
        let background = if i & 1 == 0 { warm.clone() } else { cool.clone() };
        let small = if i & 2 == 0 { "cup" } else { "book" };
        let (sofa_side, cabinet_side) = if i & 4 == 0 { (&left, &right) } else { (&right, &left) };
        categories.push(CategorySpec {
            name: name.to_string(),
            background,
            objects: vec![
                occ("sofa", 1, 1, Some(sofa_side.clone())),
                occ("cabinet", 1, 1, Some(cabinet_side.clone())),
                occ(small, 1, 3, None),
                occ("chair", 0, 2, None),
                occ("plant", 0, 1, None),
            ],
        });
    }

    let map = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    };
    let strings = |xs: &[&str]| -> Vec<String> { xs.iter().map(|s| s.to_string()).collect() };

    SyntheticWorldSpec {
        image_size: [48, 48],
        rng_seed: 20_240_601,
        categories,
        object_types: vec![
            object("sofa", Shape::Rectangle, [14, 8]),
            object("cabinet", Shape::Rectangle, [14, 8]),
            object("cup", Shape::Rectangle, [5, 5]),
            object("book", Shape::Rectangle, [5, 5]),
            object("chair", Shape::Ellipse, [8, 8]),
            object("plant", Shape::Ellipse, [6, 6]),
        ],
        segmentation_providers: vec![
            SimulatedSegProvider {
                name: "seg-indoor".into(),
                class_names: strings(&["background", "sofa", "cabinet", "chair", "plant"]),
                background_id: 0,
                labels: map(&[("sofa", "sofa"), ("cabinet", "cabinet"), ("chair", "chair"), ("plant", "plant")]),
            },
            SimulatedSegProvider {
                name: "seg-stuff".into(),
                class_names: strings(&["chair", "sofa", "cabinet", "wall"]),
                background_id: 3,
                labels: map(&[("sofa", "sofa"), ("cabinet", "cabinet"), ("chair", "chair")]),
            },
        ],
        detection_providers: vec![
            SimulatedDetProvider {
                name: "det-general".into(),
                vocabulary: strings(&["person", "chair", "sofa", "cabinet", "cup", "book", "plant", "tv"]),
                labels: map(&[
                    ("sofa", "sofa"),
                    ("cabinet", "cabinet"),
                    ("cup", "cup"),
                    ("book", "book"),
                    ("chair", "chair"),
                    ("plant", "plant"),
                ]),
            },
            SimulatedDetProvider {
                name: "det-tabletop".into(),
                vocabulary: strings(&["cup", "book", "bottle", "chair"]),
                labels: map(&[("cup", "cup"), ("book", "book"), ("chair", "chair")]),
            },
        ],
        confusable_pairs: vec![
            ConfusablePair { a: "living_room".into(), b: "lounge".into(), kind: ConfusionKind::SharedObjects },
            ConfusablePair { a: "living_room".into(), b: "study".into(), kind: ConfusionKind::SharedBackground },
        ],
    }
}

/// A reduced world over the first `n_categories` reference categories.
/// Confusable pairs are kept when both members survive.
pub fn small_world(n_categories: usize, image_size: usize) -> SyntheticWorldSpec {
    let mut spec = reference_world();
    let scale = image_size as f64 / spec.image_size[0] as f64;
    spec.image_size = [image_size, image_size];
    spec.categories.truncate(n_categories.clamp(3, 8));
    for o in &mut spec.object_types {
        o.size = o.size.map(|s| ((s as f64 * scale).round() as u32).max(2));
    }
    let kept: BTreeSet<String> = spec.categories.iter().map(|c| c.name.clone()).collect();
    spec.confusable_pairs.retain(|p| kept.contains(&p.a) && kept.contains(&p.b));
    spec
}
