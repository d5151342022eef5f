//! 3x3 grid localization and object color naming.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::color::nearest_color_name;
use crate::image::RgbImage;
use crate::scene::BBox;

/// Cell of the 3x3 partition of an image, in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridCell {
    TopLeft,
    TopCenter,
    TopRight,
    MiddleLeft,
    Center,
    MiddleRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl GridCell {
    pub const ALL: [GridCell; 9] = [
        GridCell::TopLeft,
        GridCell::TopCenter,
        GridCell::TopRight,
        GridCell::MiddleLeft,
        GridCell::Center,
        GridCell::MiddleRight,
        GridCell::BottomLeft,
        GridCell::BottomCenter,
        GridCell::BottomRight,
    ];

    pub fn from_row_col(row: usize, col: usize) -> GridCell {
        GridCell::ALL[row * 3 + col]
    }

    pub fn name(self) -> &'static str {
        match self {
            GridCell::TopLeft => "top-left",
            GridCell::TopCenter => "top-center",
            GridCell::TopRight => "top-right",
            GridCell::MiddleLeft => "middle-left",
            GridCell::Center => "center",
            GridCell::MiddleRight => "middle-right",
            GridCell::BottomLeft => "bottom-left",
            GridCell::BottomCenter => "bottom-center",
            GridCell::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cell containing the point `(num_x / den, num_y / den)` in pixel-index
/// coordinates. The internal boundaries sit at `k * size / 3`; a point on a
/// boundary belongs to the lower-index cell.
pub fn grid_cell_of_point(num_x: u64, num_y: u64, den: u64, width: usize, height: usize) -> GridCell {
    // index along an axis = number of boundaries strictly below the coordinate
    let axis = |num: u64, size: usize| -> usize {
        (1..=2u64).filter(|&k| 3 * num > k * size as u64 * den).count()
    };
    GridCell::from_row_col(axis(num_y, height), axis(num_x, width))
}

/// Cell holding the centroid of `bbox`.
pub fn grid_position(bbox: &BBox, width: usize, height: usize) -> GridCell {
    grid_cell_of_point(
        (bbox.x0 + bbox.x1) as u64,
        (bbox.y0 + bbox.y1) as u64,
        2,
        width,
        height,
    )
}

/// Pixel at the integer centroid of `bbox`.
pub fn center_pixel(image: &RgbImage, bbox: &BBox) -> [u8; 3] {
    image.get(((bbox.x0 + bbox.x1) / 2) as usize, ((bbox.y0 + bbox.y1) / 2) as usize)
}

/// Name of the nearest named color to the pixel at the box centroid.
pub fn center_color(image: &RgbImage, bbox: &BBox) -> &'static str {
    nearest_color_name(center_pixel(image, bbox))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// First cell whose closed interval `[c * size / 3, (c + 1) * size / 3]`
    /// contains the doubled coordinate, scanning upward.
    fn oracle_axis(twice: u64, size: usize) -> usize {
        (0..3u64)
            .find(|&c| {
                let lo = 2 * c * size as u64; // scaled by 6 on both sides
                let hi = 2 * (c + 1) * size as u64;
                let v = 3 * twice;
                lo <= v && v <= hi
            })
            .expect("coordinate inside image")
            as usize
    }

    fn sweep(width: usize, height: usize) {
        let mut hit = HashSet::new();
        for ty in 0..=2 * (height as u64 - 1) {
            for tx in 0..=2 * (width as u64 - 1) {
                let got = grid_cell_of_point(tx, ty, 2, width, height);
                let want = GridCell::from_row_col(oracle_axis(ty, height), oracle_axis(tx, width));
                assert_eq!(got, want, "centroid ({}, {}) on {width}x{height}", tx as f64 / 2.0, ty as f64 / 2.0);
                hit.insert(got);
            }
        }
        assert_eq!(hit.len(), 9);
    }

    #[test]
    fn exhaustive_centroid_sweep_9x9() {
        sweep(9, 9);
    }

    #[test]
    fn exhaustive_centroid_sweep_64x48() {
        sweep(64, 48);
    }

    #[test]
    fn named_examples() {
        // centroid (31.5, 31.5) on 63x63
        assert_eq!(grid_position(&BBox::new(31, 31, 32, 32), 63, 63), GridCell::Center);
        assert_eq!(grid_position(&BBox::new(0, 0, 2, 2), 63, 63), GridCell::TopLeft);
        assert_eq!(grid_position(&BBox::new(60, 60, 62, 62), 63, 63), GridCell::BottomRight);
    }

    #[test]
    fn boundary_goes_to_lower_cell() {
        // boundary at x = 3 on a 9-wide image
        assert_eq!(grid_cell_of_point(6, 0, 2, 9, 9), GridCell::TopLeft);
        assert_eq!(grid_cell_of_point(7, 0, 2, 9, 9), GridCell::TopCenter);
    }

    #[test]
    fn center_color_reads_the_floor_centroid() {
        let mut img = RgbImage::filled(6, 6, [0, 0, 255]);
        img.put(2, 2, [255, 0, 0]);
        assert_eq!(center_color(&img, &BBox::new(1, 1, 4, 4)), "red");
        assert_eq!(center_color(&img, &BBox::new(0, 0, 1, 1)), "blue");
    }
}
