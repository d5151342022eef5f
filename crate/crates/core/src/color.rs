//! Fixed color tables: the 16 named colors used to describe objects and the
//! id-to-RGB encoding used to render segmentation maps.

/// The 16 basic named colors, in lookup order. Ties in nearest-color
/// matching resolve to the earlier entry.
pub const NAMED_COLORS: [(&str, [u8; 3]); 16] = [
    ("black", [0, 0, 0]),
    ("silver", [192, 192, 192]),
    ("gray", [128, 128, 128]),
    ("white", [255, 255, 255]),
    ("maroon", [128, 0, 0]),
    ("red", [255, 0, 0]),
    ("purple", [128, 0, 128]),
    ("magenta", [255, 0, 255]),
    ("green", [0, 128, 0]),
    ("lime", [0, 255, 0]),
    ("olive", [128, 128, 0]),
    ("yellow", [255, 255, 0]),
    ("navy", [0, 0, 128]),
    ("blue", [0, 0, 255]),
    ("teal", [0, 128, 128]),
    ("cyan", [0, 255, 255]),
];

/// Index into [`NAMED_COLORS`] of the entry nearest to `rgb` in Euclidean
/// RGB distance.
pub fn nearest_color_index(rgb: [u8; 3]) -> usize {
    let mut best = 0;
    let mut best_d = u32::MAX;
    for (i, (_, c)) in NAMED_COLORS.iter().enumerate() {
        let d: u32 = (0..3)
            .map(|k| {
                let diff = rgb[k] as i32 - c[k] as i32;
                (diff * diff) as u32
            })
            .sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn nearest_color_name(rgb: [u8; 3]) -> &'static str {
    NAMED_COLORS[nearest_color_index(rgb)].0
}

pub fn named_color(name: &str) -> Option<[u8; 3]> {
    NAMED_COLORS.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

/// RGB encoding of a segmentation class id.
///
/// Bit-interleaved palette: bit `3k + c` of the id sets bit `7 - k` of
/// channel `c`. The map is a bijection on `0..=255`, and id 0 encodes as black.
pub fn segment_color(id: u8) -> [u8; 3] {
    let mut rgb = [0u8; 3];
    let mut v = id;
    let mut shift = 7;
    while v != 0 {
        for c in rgb.iter_mut() {
            *c |= (v & 1) << shift;
            v >>= 1;
        }
        shift -= 1;
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn exact_entries_match_themselves() {
        assert_eq!(nearest_color_name([255, 0, 0]), "red");
        for (i, (name, c)) in NAMED_COLORS.iter().enumerate() {
            assert_eq!(nearest_color_index(*c), i);
            assert_eq!(named_color(name), Some(*c));
        }
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        // (64, 64, 64) is equidistant from black, gray and maroon.
        let p = [64u8, 64, 64];
        let d = |c: [u8; 3]| -> i32 { (0..3).map(|k| (p[k] as i32 - c[k] as i32).pow(2)).sum() };
        assert_eq!(d(NAMED_COLORS[0].1), d(NAMED_COLORS[2].1));
        assert_eq!(d(NAMED_COLORS[0].1), d(NAMED_COLORS[4].1));
        assert_eq!(nearest_color_name(p), "black");
    }

    #[test]
    fn segment_palette_is_injective() {
        let colors: HashSet<[u8; 3]> = (0..=255u8).map(segment_color).collect();
        assert_eq!(colors.len(), 256);
        assert_eq!(segment_color(0), [0, 0, 0]);
        assert_eq!(segment_color(1), [128, 0, 0]);
        assert_eq!(segment_color(2), [0, 128, 0]);
    }
}
