//! Occlusion saliency for the low-level discriminators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{Error, Result, VTEG};
use crate::image::{GrayImage, RgbImage};

pub const OCCLUDER: [u8; 3] = [128, 128, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatKind {
    Single,
    Cumulative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    pub kind: HeatKind,
    /// Indices of the discriminators that produced the map.
    pub sources: Vec<usize>,
}

impl HeatMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, kind: HeatKind, sources: Vec<usize>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(VTEG, format!("{} heat values for a {width}x{height} map", values.len())));
        }
        Ok(Self { width, height, values, kind, sources })
    }

    pub fn zeros(width: usize, height: usize, kind: HeatKind) -> Self {
        Self { width, height, values: vec![0.0; width * height], kind, sources: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gray rendering with `full_scale` mapped to 255.
    pub fn to_gray(&self, full_scale: f64) -> GrayImage {
        let data = self
            .values
            .iter()
            .map(|v| if full_scale > 0.0 { (v / full_scale * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
            .collect();
        GrayImage::from_raw(self.width, self.height, data).expect("dimensions match")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub window: usize,
    pub stride: usize,
}

impl OcclusionConfig {
    /// Window of an eighth of the shorter side, half-window stride.
    pub fn for_image(width: usize, height: usize) -> Self {
        let window = (width.min(height) / 8).max(1);
        Self { window, stride: (window / 2).max(1) }
    }
}

/// Window offsets along one axis; the last window always touches the edge.
fn offsets(size: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = size - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Occlusion heatmap of `classifier` for `target`.
///
/// A gray square slides over the image; every covered pixel accumulates the
/// drop in the target probability (clamped at zero), contributions are
/// averaged over the windows covering the pixel, and the result is min-max
/// normalized. A constant map becomes all zero.
pub fn occlusion_heatmap(
    classifier: &Classifier,
    image: &RgbImage,
    featurize: &(dyn Fn(&RgbImage) -> Vec<f64> + Sync),
    target: usize,
    config: OcclusionConfig,
) -> Result<HeatMap> {
    let (w, h) = (image.width(), image.height());
    let OcclusionConfig { window, stride } = config;
    if window == 0 || window > w || window > h {
        return Err(Error::config(VTEG, format!("occlusion window {window} does not fit a {w}x{h} image")));
    }
    if stride == 0 {
        return Err(Error::config(VTEG, "occlusion stride must be at least 1"));
    }
    if target >= classifier.output_width() {
        return Err(Error::config(VTEG, format!("target class {target} out of range")));
    }
    let base = classifier.predict_proba(&featurize(image))?[target];
    let positions: Vec<(usize, usize)> = offsets(h, window, stride)
        .into_iter()
        .flat_map(|y| offsets(w, window, stride).into_iter().map(move |x| (x, y)))
        .collect();
    let drops = positions
        .par_iter()
        .map(|&(x, y)| {
            let mut occluded = image.clone();
            occluded.fill_rect(x, y, x + window - 1, y + window - 1, OCCLUDER);
            let p = classifier.predict_proba(&featurize(&occluded))?[target];
            Ok((base - p).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for (&(x0, y0), d) in positions.iter().zip(&drops) {
        for y in y0..y0 + window {
            for x in x0..x0 + window {
                sum[y * w + x] += d;
                count[y * w + x] += 1;
            }
        }
    }
    let mut values: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    normalize_in_place(&mut values);
    HeatMap::new(w, h, values, HeatKind::Single, Vec::new())
}

/// Min-max normalization to [0, 1]; a constant slice becomes zeros.
pub fn normalize_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max > min {
        for v in values.iter_mut() {
            *v = (*v - min) / (max - min);
        }
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Element-wise sum of single heatmaps.
pub fn cumulative_heatmap(maps: &[HeatMap]) -> Result<HeatMap> {
    let first = maps.first().ok_or_else(|| Error::data(VTEG, "no heatmaps to accumulate"))?;
    let (w, h) = (first.width, first.height);
    let mut values = vec![0.0; w * h];
    let mut sources = Vec::new();
    for m in maps {
        if (m.width, m.height) != (w, h) {
            return Err(Error::shape(
                VTEG,
                format!("heatmap of {}x{} accumulated with {w}x{h}", m.width, m.height),
            ));
        }
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += v;
        }
        sources.extend(&m.sources);
    }
    HeatMap::new(w, h, values, HeatKind::Cumulative, sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{Classifier, Dense};
    use crate::features::pixel_features;
    use proptest::prelude::*;

    /// Two-class model whose class-0 logit reads the red channel of one
    /// pooled cell (4x4 grid on a 16x16 image).
    fn patch_detector(cell: (usize, usize)) -> Classifier {
        let grid = 4;
        let inputs = grid * grid * 3;
        let mut weights = vec![0.0; 2 * inputs];
        weights[(cell.1 * grid + cell.0) * 3] = 8.0;
        Classifier::from_layers(vec![Dense { inputs, outputs: 2, weights, bias: vec![-4.0, 0.0] }], 0, true).unwrap()
    }

    fn featurize(img: &RgbImage) -> Vec<f64> {
        pixel_features(img, 4)
    }

    #[test]
    fn ignoring_the_input_gives_zero_heat() {
        let blind = Classifier::from_layers(
            vec![Dense { inputs: 48, outputs: 3, weights: vec![0.0; 144], bias: vec![0.3, 0.1, 0.0] }],
            0,
            true,
        )
        .unwrap();
        let img = RgbImage::filled(16, 16, [10, 200, 30]);
        let hm = occlusion_heatmap(&blind, &img, &featurize, 0, OcclusionConfig { window: 4, stride: 2 }).unwrap();
        assert!(hm.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_patch_holds_the_hottest_pixel() {
        let model = patch_detector((2, 1));
        let mut img = RgbImage::filled(16, 16, [0, 0, 0]);
        img.fill_rect(8, 4, 11, 7, [255, 0, 0]);
        let cfg = OcclusionConfig { window: 2, stride: 1 };
        let hm = occlusion_heatmap(&model, &img, &featurize, 0, cfg).unwrap();

        // exhaustive oracle: the drop of every window position, no averaging
        let base = model.predict_proba(&featurize(&img)).unwrap()[0];
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for y in 0..=14 {
            for x in 0..=14 {
                let mut o = img.clone();
                o.fill_rect(x, y, x + 1, y + 1, OCCLUDER);
                let d = base - model.predict_proba(&featurize(&o)).unwrap()[0];
                if d > best.0 {
                    best = (d, x, y);
                }
            }
        }
        assert!((8..=11).contains(&best.1) && (4..=7).contains(&best.2));

        let (mut at, mut top) = (0, f64::NEG_INFINITY);
        for (i, &v) in hm.values().iter().enumerate() {
            if v > top {
                top = v;
                at = i;
            }
        }
        let (x, y) = (at % 16, at / 16);
        assert!((8..=11).contains(&x) && (4..=7).contains(&y), "hottest pixel at ({x}, {y})");
        assert_eq!(top, 1.0);
    }

    #[test]
    fn argument_errors() {
        let model = patch_detector((0, 0));
        let img = RgbImage::filled(16, 16, [0, 0, 0]);
        assert!(occlusion_heatmap(&model, &img, &featurize, 0, OcclusionConfig { window: 17, stride: 1 }).is_err());
        assert!(occlusion_heatmap(&model, &img, &featurize, 0, OcclusionConfig { window: 4, stride: 0 }).is_err());
        let untrained = Classifier::new(&[48, 2], 0).unwrap();
        assert!(matches!(
            occlusion_heatmap(&untrained, &img, &featurize, 0, OcclusionConfig { window: 4, stride: 2 }),
            Err(Error::Untrained { .. })
        ));
    }

    #[test]
    fn offsets_cover_the_far_edge() {
        assert_eq!(offsets(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(offsets(11, 4, 3), vec![0, 3, 6, 7]);
        assert_eq!(offsets(4, 4, 1), vec![0]);
    }

    #[test]
    fn cumulative_of_identical_maps_scales() {
        let m = HeatMap::new(2, 2, vec![0.0, 0.25, 0.5, 1.0], HeatKind::Single, vec![0]).unwrap();
        let c = cumulative_heatmap(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(c.values(), &[0.0, 0.75, 1.5, 3.0]);
        assert_eq!(c.kind, HeatKind::Cumulative);
        let z = HeatMap::zeros(2, 2, HeatKind::Single);
        assert_eq!(cumulative_heatmap(&[m.clone(), z]).unwrap().values(), m.values());
        let other = HeatMap::zeros(3, 2, HeatKind::Single);
        assert!(matches!(cumulative_heatmap(&[m, other]), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn heat_stays_in_unit_range(seed in any::<u64>(), r in 0u8..=255, g in 0u8..=255) {
            let model = Classifier::new(&[48, 5, 3], seed).unwrap();
            let model = Classifier::from_layers(model.layers().to_vec(), seed, true).unwrap();
            let mut img = RgbImage::filled(16, 16, [r, g, 90]);
            img.fill_rect(3, 3, 9, 6, [g, r, 0]);
            let hm = occlusion_heatmap(&model, &img, &featurize, (seed % 3) as usize, OcclusionConfig { window: 4, stride: 3 }).unwrap();
            prop_assert!(hm.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn cumulative_sum_is_linear(a in proptest::collection::vec(0.0f64..1.0, 12), b in proptest::collection::vec(0.0f64..1.0, 12)) {
            let ma = HeatMap::new(4, 3, a.clone(), HeatKind::Single, vec![0]).unwrap();
            let mb = HeatMap::new(4, 3, b.clone(), HeatKind::Single, vec![1]).unwrap();
            let c = cumulative_heatmap(&[ma.clone(), mb.clone()]).unwrap();
            prop_assert!((c.sum() - ma.sum() - mb.sum()).abs() < 1e-12);
            prop_assert_eq!(c.sources, vec![0, 1]);
        }
    }
}
