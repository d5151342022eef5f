//! Representation builders for the three levels, plus the segment-masking
//! and count-perturbation primitives used by the explanation generator.

use serde::{Deserialize, Serialize};

use crate::color::segment_color;
use crate::error::{Error, Result, SCENE};
use crate::image::RgbImage;
use crate::scene::{DetectionSet, SegmentationMap};

/// Color-encoded segmentation maps concatenated along the channel axis.
/// Stored row-major as `(y, x, channel)` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MidLevelFeature {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl MidLevelFeature {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Average-pools every channel onto a `grid x grid` partition.
    pub fn pooled(&self, grid: usize) -> Vec<f64> {
        average_pool(self.width, self.height, self.channels, grid, |x, y, c| self.get(x, y, c))
    }
}

pub fn build_mlf(seg_maps: &[SegmentationMap]) -> Result<MidLevelFeature> {
    let first = seg_maps
        .first()
        .ok_or_else(|| Error::data(SCENE, "mid-level feature needs at least one segmentation map"))?;
    let (width, height) = (first.width(), first.height());
    if let Some(m) = seg_maps.iter().find(|m| m.width() != width || m.height() != height) {
        return Err(Error::shape(
            SCENE,
            format!(
                "segmentation map of provider {} is {}x{}, expected {width}x{height}",
                m.provider_id(),
                m.width(),
                m.height()
            ),
        ));
    }
    let channels = 3 * seg_maps.len();
    let mut data = vec![0.0; width * height * channels];
    let mut lut = [[0.0f64; 3]; 256];
    for (id, entry) in lut.iter_mut().enumerate() {
        let rgb = segment_color(id as u8);
        *entry = [rgb[0] as f64 / 255.0, rgb[1] as f64 / 255.0, rgb[2] as f64 / 255.0];
    }
    for (block, map) in seg_maps.iter().enumerate() {
        for (p, &label) in map.labels().iter().enumerate() {
            let base = p * channels + 3 * block;
            data[base..base + 3].copy_from_slice(&lut[label as usize]);
        }
    }
    Ok(MidLevelFeature { width, height, channels, data })
}

/// Concatenated bag-of-objects counts, one segment per detection provider.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelFeature {
    counts: Vec<u32>,
    segment_sizes: Vec<usize>,
}

impl HighLevelFeature {
    pub fn from_counts(segments: Vec<Vec<u32>>) -> Self {
        let segment_sizes = segments.iter().map(Vec::len).collect();
        Self { counts: segments.concat(), segment_sizes }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn segment_sizes(&self) -> &[usize] {
        &self.segment_sizes
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Flat index of `(provider_id, class_id)`.
    pub fn index_of(&self, provider_id: usize, class_id: usize) -> Result<usize> {
        let size = *self.segment_sizes.get(provider_id).ok_or_else(|| {
            Error::data(SCENE, format!("no detection provider {provider_id} in feature"))
        })?;
        if class_id >= size {
            return Err(Error::data(
                SCENE,
                format!("class {class_id} outside vocabulary of {size} for provider {provider_id}"),
            ));
        }
        Ok(self.segment_sizes[..provider_id].iter().sum::<usize>() + class_id)
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn address_of(&self, index: usize) -> Option<(usize, usize)> {
        let mut start = 0;
        for (p, &size) in self.segment_sizes.iter().enumerate() {
            if index < start + size {
                return Some((p, index - start));
            }
            start += size;
        }
        None
    }

    pub fn with_count(&self, index: usize, count: u32) -> Result<Self> {
        if index >= self.counts.len() {
            return Err(Error::data(
                SCENE,
                format!("feature index {index} outside length {}", self.counts.len()),
            ));
        }
        let mut out = self.clone();
        out.counts[index] = count;
        Ok(out)
    }
}

/// Detection sets must be given in provider-registry order.
pub fn build_hlf(detections: &[DetectionSet]) -> Result<HighLevelFeature> {
    let mut segments = Vec::with_capacity(detections.len());
    for (i, set) in detections.iter().enumerate() {
        if set.provider_id != i {
            return Err(Error::data(
                SCENE,
                format!("detection provider {} found at registry position {i}", set.provider_id),
            ));
        }
        let mut ov = vec![0u32; set.vocabulary_size];
        for d in &set.boxes {
            let slot = ov.get_mut(d.class_id).ok_or_else(|| {
                Error::data(
                    SCENE,
                    format!(
                        "provider {i}: class id {} outside vocabulary of {}",
                        d.class_id, set.vocabulary_size
                    ),
                )
            })?;
            *slot += 1;
        }
        segments.push(ov);
    }
    Ok(HighLevelFeature::from_counts(segments))
}

/// Returns a copy of the maps with every pixel of `class_id` in the map of
/// `provider_id` set to that map's background class.
pub fn mask_segment(
    seg_maps: &[SegmentationMap],
    provider_id: usize,
    class_id: u8,
) -> Result<Vec<SegmentationMap>> {
    let target = seg_maps
        .iter()
        .position(|m| m.provider_id() == provider_id)
        .ok_or_else(|| Error::data(SCENE, format!("no segmentation map from provider {provider_id}")))?;
    let map = &seg_maps[target];
    if class_id == map.background_id() {
        return Ok(seg_maps.to_vec());
    }
    if !map.labels().contains(&class_id) {
        return Err(Error::ClassAbsent { module: SCENE, provider_id, class_id });
    }
    let mut out = seg_maps.to_vec();
    out[target] = map.relabelled(class_id, map.background_id());
    Ok(out)
}

pub fn perturb_hlf(
    hlf: &HighLevelFeature,
    provider_id: usize,
    class_id: usize,
    new_count: u32,
) -> Result<HighLevelFeature> {
    hlf.with_count(hlf.index_of(provider_id, class_id)?, new_count)
}

/// Low-level pixel representation: the image average-pooled onto a
/// `grid x grid` partition, scaled to `[0, 1]`.
pub fn pixel_features(image: &RgbImage, grid: usize) -> Vec<f64> {
    average_pool(image.width(), image.height(), 3, grid, |x, y, c| image.get(x, y)[c] as f64 / 255.0)
}

/// Pooled output layout is `(cell_y, cell_x, channel)`. Cell boundaries are
/// `floor(i * size / grid)`.
fn average_pool(
    width: usize,
    height: usize,
    channels: usize,
    grid: usize,
    value: impl Fn(usize, usize, usize) -> f64,
) -> Vec<f64> {
    let grid_x = grid.min(width).max(1);
    let grid_y = grid.min(height).max(1);
    let mut out = vec![0.0; grid_x * grid_y * channels];
    for gy in 0..grid_y {
        let (y0, y1) = (gy * height / grid_y, (gy + 1) * height / grid_y);
        for gx in 0..grid_x {
            let (x0, x1) = (gx * width / grid_x, (gx + 1) * width / grid_x);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let cell = &mut out[(gy * grid_x + gx) * channels..][..channels];
            for y in y0..y1 {
                for x in x0..x1 {
                    for (c, acc) in cell.iter_mut().enumerate() {
                        *acc += value(x, y, c);
                    }
                }
            }
            for acc in cell.iter_mut() {
                *acc /= n;
            }
        }
    }
    out
}

/// Width of the pooled vector produced for a `width x height` raster.
pub fn pooled_len(width: usize, height: usize, channels: usize, grid: usize) -> usize {
    grid.min(width).max(1) * grid.min(height).max(1) * channels
}
