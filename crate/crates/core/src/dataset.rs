//! Dataset container and its directory layout:
//!
//! ```text
//! manifest.json                 world echo, categories, provider registry, splits
//! scene_<id>.ppm                P6 image
//! seg_<id>_<provider>.pgm       P5, gray value = class id
//! det_<id>.json                 array of detection sets
//! softmax_<id>_<level>.csv      optional recorded softmax, one row per discriminator
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SCENE};
use crate::image::{load_pgm, load_ppm, save_pgm, save_ppm, GrayImage};
use crate::scene::{DetectionSet, Level, SceneInstance, SegmentationMap, Split};
use crate::world::{generate_dataset, ProviderRegistry, SyntheticWorldSpec};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub image_size: [usize; 2],
    pub registry: ProviderRegistry,
    pub world: Option<SyntheticWorldSpec>,
    pub scenes: Vec<SceneInstance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: u32,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub world: Option<SyntheticWorldSpec>,
    pub categories: Vec<String>,
    pub image_size: [usize; 2],
    pub providers: ProviderRegistry,
    pub scenes: Vec<SceneRecord>,
    #[serde(default)]
    pub recorded_softmax: Vec<Level>,
}

pub fn scene_file(id: u32) -> String {
    format!("scene_{}.ppm", scene_key(id))
}

pub fn seg_file(id: u32, provider: usize) -> String {
    format!("seg_{}_{provider}.pgm", scene_key(id))
}

pub fn det_file(id: u32) -> String {
    format!("det_{}.json", scene_key(id))
}

pub fn softmax_file(id: u32, level: Level) -> String {
    format!("softmax_{}_{level}.csv", scene_key(id))
}

/// Zero-padded scene id used in file names.
pub fn scene_key(id: u32) -> String {
    format!("{id:05}")
}

impl Dataset {
    pub fn synthetic(world: &SyntheticWorldSpec, n_per_category: usize, split_ratios: [f64; 3]) -> Result<Self> {
        let scenes = generate_dataset(world, n_per_category, split_ratios)?;
        Ok(Self {
            categories: world.category_names(),
            image_size: world.image_size,
            registry: world.registry(),
            world: Some(world.clone()),
            scenes,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn split(&self, split: Split) -> Vec<&SceneInstance> {
        self.scenes.iter().filter(|s| s.split == split).collect()
    }

    pub fn scene(&self, id: u32) -> Option<&SceneInstance> {
        self.scenes.iter().find(|s| s.id == id)
    }

    pub fn recorded_levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = self
            .scenes
            .iter()
            .flat_map(|s| s.recorded_softmax.keys().copied())
            .collect();
        levels.sort();
        levels.dedup();
        levels
    }

    pub fn validate(&self) -> Result<()> {
        let n_seg = self.registry.segmentation.len();
        let vocab = self.registry.vocabulary_sizes();
        for s in &self.scenes {
            s.validate(self.n_categories())?;
            let ctx = |msg: String| Error::data(SCENE, format!("scene {}: {msg}", s.id));
            if [s.image.width(), s.image.height()] != self.image_size {
                return Err(ctx(format!("image is {}x{}", s.image.width(), s.image.height())));
            }
            if s.seg_maps.len() != n_seg {
                return Err(ctx(format!("{} segmentation maps, registry has {n_seg}", s.seg_maps.len())));
            }
            for (i, m) in s.seg_maps.iter().enumerate() {
                let info = &self.registry.segmentation[i];
                if m.provider_id() != i || m.class_names() != info.class_names.as_slice() || m.background_id() != info.background_id {
                    return Err(ctx(format!("segmentation map {i} does not match provider '{}'", info.name)));
                }
            }
            let got: Vec<usize> = s.detections.iter().map(|d| d.vocabulary_size).collect();
            if got != vocab || s.detections.iter().enumerate().any(|(i, d)| d.provider_id != i) {
                return Err(ctx("detection sets do not match the provider registry".into()));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: 1,
            world: self.world.clone(),
            categories: self.categories.clone(),
            image_size: self.image_size,
            providers: self.registry.clone(),
            scenes: self
                .scenes
                .iter()
                .map(|s| SceneRecord { id: s.id, label: s.label, split: s.split })
                .collect(),
            recorded_softmax: self.recorded_levels(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(MANIFEST), &self.manifest())?;
        self.scenes.par_iter().try_for_each(|s| save_scene(s, dir))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        let scenes = manifest
            .scenes
            .par_iter()
            .map(|rec| load_scene(dir, rec, &manifest))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            categories: manifest.categories,
            image_size: manifest.image_size,
            registry: manifest.providers,
            world: manifest.world,
            scenes,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn save_scene(s: &SceneInstance, dir: &Path) -> Result<()> {
    save_ppm(&s.image, &dir.join(scene_file(s.id)))?;
    for m in &s.seg_maps {
        let gray = GrayImage::from_raw(m.width(), m.height(), m.labels().to_vec())?;
        save_pgm(&gray, &dir.join(seg_file(s.id, m.provider_id())))?;
    }
    write_json(&dir.join(det_file(s.id)), &s.detections)?;
    for (level, rows) in &s.recorded_softmax {
        write_softmax_csv(&dir.join(softmax_file(s.id, *level)), rows)?;
    }
    Ok(())
}

fn load_scene(dir: &Path, rec: &SceneRecord, manifest: &Manifest) -> Result<SceneInstance> {
    let image = load_ppm(&dir.join(scene_file(rec.id)))?;
    let seg_maps = manifest
        .providers
        .segmentation
        .iter()
        .enumerate()
        .map(|(p, info)| {
            let gray = load_pgm(&dir.join(seg_file(rec.id, p)))?;
            SegmentationMap::new(
                gray.width(),
                gray.height(),
                gray.into_raw(),
                p,
                info.class_names.clone(),
                info.background_id,
            )
            .map_err(|e| Error::data(SCENE, format!("{}: {e}", seg_file(rec.id, p))))
        })
        .collect::<Result<Vec<_>>>()?;
    let detections: Vec<DetectionSet> = read_json(&dir.join(det_file(rec.id)))?;
    let mut recorded_softmax = BTreeMap::new();
    for level in &manifest.recorded_softmax {
        let path = dir.join(softmax_file(rec.id, *level));
        recorded_softmax.insert(*level, read_softmax_csv(&path)?);
    }
    Ok(SceneInstance {
        id: rec.id,
        image,
        seg_maps,
        detections,
        label: rec.label,
        split: rec.split,
        recorded_softmax,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Rows of comma-separated probabilities; floats use the shortest
/// representation that parses back to the same value.
pub fn write_softmax_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_softmax_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| {
                        Error::data(SCENE, format!("{}: row {}: '{}' is not a number", path.display(), i + 1, cell.trim()))
                    })
                })
                .collect()
        })
        .collect()
}

/// Resolves `path` against `base` when relative.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
