//! Externally produced provider outputs attached to an existing dataset.
//!
//! A recorded directory holds `recorded.json` plus, per scene id, the same
//! file names a dataset uses: `seg_<id>_<k>.pgm` for each recorded
//! segmentation provider `k`, `det_<id>.json` when detection providers are
//! recorded, and `softmax_<id>_<level>.csv` for each recorded level.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use entri_core::dataset::{det_file, read_json, read_softmax_csv, seg_file, softmax_file, write_json, write_softmax_csv, Dataset};
use entri_core::image::{load_pgm, save_pgm, GrayImage};
use entri_core::scene::{DetectionSet, Level, SegmentationMap};
use entri_core::world::{DetProviderInfo, SegProviderInfo};
use entri_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::CLI;

pub const RECORDED_MANIFEST: &str = "recorded.json";
pub const SOFTMAX_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Recorded providers take the place of the dataset's providers of the same kind.
    Replace,
    /// Recorded providers are appended after the dataset's providers.
    Extend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedManifest {
    pub mode: MergeMode,
    #[serde(default)]
    pub segmentation: Vec<SegProviderInfo>,
    #[serde(default)]
    pub detection: Vec<DetProviderInfo>,
    #[serde(default)]
    pub softmax: Vec<Level>,
    pub scenes: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordedScene {
    pub seg_maps: Vec<SegmentationMap>,
    pub detections: Vec<DetectionSet>,
    pub softmax: BTreeMap<Level, Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordedProviderBundle {
    pub manifest: RecordedManifest,
    pub scenes: BTreeMap<u32, RecordedScene>,
}

fn scene_err(id: u32, e: impl std::fmt::Display) -> Error {
    Error::data(CLI, format!("recorded scene {id}: {e}"))
}

impl RecordedProviderBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: RecordedManifest = read_json(&dir.join(RECORDED_MANIFEST))?;
        let unique: BTreeSet<u32> = manifest.scenes.iter().copied().collect();
        if unique.len() != manifest.scenes.len() {
            return Err(Error::data(CLI, "recorded manifest lists a scene id twice"));
        }
        let scenes = manifest
            .scenes
            .par_iter()
            .map(|&id| {
                let seg_maps = manifest
                    .segmentation
                    .iter()
                    .enumerate()
                    .map(|(k, info)| {
                        let gray = load_pgm(&dir.join(seg_file(id, k))).map_err(|e| scene_err(id, e))?;
                        SegmentationMap::new(
                            gray.width(),
                            gray.height(),
                            gray.into_raw(),
                            k,
                            info.class_names.clone(),
                            info.background_id,
                        )
                        .map_err(|e| scene_err(id, format!("{}: {e}", seg_file(id, k))))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let detections = if manifest.detection.is_empty() {
                    Vec::new()
                } else {
                    let sets: Vec<DetectionSet> = read_json(&dir.join(det_file(id))).map_err(|e| scene_err(id, e))?;
                    let sizes: Vec<usize> = sets.iter().map(|s| s.vocabulary_size).collect();
                    let want: Vec<usize> = manifest.detection.iter().map(|d| d.vocabulary.len()).collect();
                    if sizes != want {
                        return Err(scene_err(id, format!("detection vocabularies {sizes:?}, manifest says {want:?}")));
                    }
                    sets
                };
                let mut softmax = BTreeMap::new();
                for &level in &manifest.softmax {
                    let rows = read_softmax_csv(&dir.join(softmax_file(id, level))).map_err(|e| scene_err(id, e))?;
                    for (r, row) in rows.iter().enumerate() {
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > SOFTMAX_TOLERANCE {
                            return Err(scene_err(id, format!("{level} softmax row {} sums to {sum}", r + 1)));
                        }
                    }
                    softmax.insert(level, rows);
                }
                Ok((id, RecordedScene { seg_maps, detections, softmax }))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { manifest, scenes })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(RECORDED_MANIFEST), &self.manifest)?;
        for (&id, s) in &self.scenes {
            for (k, m) in s.seg_maps.iter().enumerate() {
                let gray = GrayImage::from_raw(m.width(), m.height(), m.labels().to_vec())?;
                save_pgm(&gray, &dir.join(seg_file(id, k)))?;
            }
            if !self.manifest.detection.is_empty() {
                write_json(&dir.join(det_file(id)), &s.detections)?;
            }
            for (level, rows) in &s.softmax {
                write_softmax_csv(&dir.join(softmax_file(id, *level)), rows)?;
            }
        }
        Ok(())
    }
}

/// Attaches recorded providers and softmax rows to `dataset`.
pub fn ingest_recorded(bundle: &RecordedProviderBundle, mut dataset: Dataset) -> Result<Dataset> {
    let have: BTreeSet<u32> = dataset.scenes.iter().map(|s| s.id).collect();
    let got: BTreeSet<u32> = bundle.scenes.keys().copied().collect();
    if let Some(id) = have.difference(&got).next() {
        return Err(Error::data(CLI, format!("scene {id} has no recorded provider files")));
    }
    if let Some(id) = got.difference(&have).next() {
        return Err(Error::data(CLI, format!("recorded scene {id} is not in the dataset manifest")));
    }
    let m = &bundle.manifest;
    let replace = m.mode == MergeMode::Replace;
    let seg_offset = if replace { 0 } else { dataset.registry.segmentation.len() };
    let det_offset = if replace { 0 } else { dataset.registry.detection.len() };

    for scene in &mut dataset.scenes {
        let rec = &bundle.scenes[&scene.id];
        if !m.segmentation.is_empty() {
            let shifted = rec
                .seg_maps
                .iter()
                .map(|map| {
                    SegmentationMap::new(
                        map.width(),
                        map.height(),
                        map.labels().to_vec(),
                        map.provider_id() + seg_offset,
                        map.class_names().to_vec(),
                        map.background_id(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            if replace {
                scene.seg_maps = shifted;
            } else {
                scene.seg_maps.extend(shifted);
            }
        }
        if !m.detection.is_empty() {
            let shifted = rec.detections.iter().enumerate().map(|(k, set)| DetectionSet {
                provider_id: k + det_offset,
                ..set.clone()
            });
            if replace {
                scene.detections = shifted.collect();
            } else {
                scene.detections.extend(shifted);
            }
        }
        for (level, rows) in &rec.softmax {
            scene.recorded_softmax.insert(*level, rows.clone());
        }
    }
    if !m.segmentation.is_empty() {
        if replace {
            dataset.registry.segmentation.clear();
        }
        dataset.registry.segmentation.extend(m.segmentation.iter().cloned());
    }
    if !m.detection.is_empty() {
        if replace {
            dataset.registry.detection.clear();
        }
        dataset.registry.detection.extend(m.detection.iter().cloned());
    }
    if !m.segmentation.is_empty() || !m.detection.is_empty() {
        dataset.world = None;
    }
    dataset.validate().map_err(|e| Error::data(CLI, format!("ingested dataset: {e}")))?;
    Ok(dataset)
}
