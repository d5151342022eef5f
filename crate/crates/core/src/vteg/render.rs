//! Textual template, its grammar check, and the visual artifacts.

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;

use crate::color::{segment_color, NAMED_COLORS};
use crate::dataset::{scene_key, write_json};
use crate::error::{Error, Result, VTEG};
use crate::geometry::GridCell;
use crate::image::{save_pgm, save_ppm, RgbImage};
use crate::scene::{BBox, Level, SegmentationMap};
use crate::vteg::attributes::{AttributedObject, TOP_OBJECTS};
use crate::vteg::{Explanation, LevelExplanation};

pub const NO_OBJECTS: &str = "No objects could be attributed at this level.";
const LEAD_OUT: &str = "The most influential objects were:";

/// Borders burned into the overlay, by rank.
pub const BOX_COLORS: [[u8; 3]; TOP_OBJECTS] = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];
pub const BOX_THICKNESS: usize = 2;

pub fn level_description(level: Level) -> &'static str {
    match level {
        Level::Low => "the raw pixels of the image",
        Level::Mid => "the segmented regions of the scene",
        Level::High => "the objects detected in the scene",
    }
}

fn bullet(o: &AttributedObject) -> String {
    let pos = o.position.map_or("unknown", GridCell::name);
    match o.level {
        Level::Low => format!(
            "- {}: color {}, position {pos}, contribution score {:.2}",
            o.name,
            o.color.as_deref().unwrap_or("unknown"),
            o.contribution_score
        ),
        Level::Mid => format!("- {}: position {pos}, contribution score {:.2}", o.name, o.contribution_score),
        Level::High => format!(
            "- {}: frequency {}, contribution score {:.2}, statistical score {:.2}",
            o.name,
            o.frequency.unwrap_or(0),
            o.contribution_score,
            o.statistical_score.unwrap_or(0.0)
        ),
    }
}

/// One paragraph per level, blank-line separated, LF endings.
pub fn render_text(final_category: &str, levels: &[LevelExplanation]) -> String {
    let paragraphs: Vec<String> = levels
        .iter()
        .map(|l| {
            let mut p = format!(
                "Based on {}, this sub-model agrees with the final prediction '{final_category}' at {:.1}%. ",
                level_description(l.level),
                l.agreement
            );
            if l.objects.is_empty() {
                p.push_str(NO_OBJECTS);
            } else {
                p.push_str(LEAD_OUT);
                for o in &l.objects {
                    p.push('\n');
                    p.push_str(&bullet(o));
                }
            }
            p
        })
        .collect();
    let mut text = paragraphs.join("\n\n");
    text.push('\n');
    text
}

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^Based on (.+), this sub-model agrees with the final prediction '([^']+)' at (\d{1,3}\.\d)%\. (The most influential objects were:|No objects could be attributed at this level\.)$",
    )
    .unwrap()
});
static LOW: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^- ([^:\n]+): color ([a-z]+), position ([a-z-]+), contribution score (\d\.\d\d)$").unwrap()
});
static MID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^- ([^:\n]+): position ([a-z-]+), contribution score (\d\.\d\d)$").unwrap());
static HIGH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^- ([^:\n]+): frequency (\d+), contribution score (\d\.\d\d), statistical score (\d\.\d\d)$").unwrap()
});

/// Checks `text` against the template: level order, header sentence,
/// one to three bullets with the level's fields, non-increasing scores in
/// [0, 1], known positions and colors, agreement in [0, 100].
pub fn check_grammar(text: &str) -> Result<()> {
    let bad = |msg: String| Error::data(VTEG, format!("explanation text: {msg}"));
    let body = text.strip_suffix('\n').ok_or_else(|| bad("missing final newline".into()))?;
    if body.contains('\r') {
        return Err(bad("CR line ending".into()));
    }
    let mut previous: Option<Level> = None;
    let mut category: Option<String> = None;
    for para in body.split("\n\n") {
        let mut lines = para.lines();
        let head = lines.next().unwrap_or("");
        let caps = HEADER.captures(head).ok_or_else(|| bad(format!("bad header '{head}'")))?;
        let level = Level::ALL
            .into_iter()
            .find(|&l| level_description(l) == &caps[1])
            .ok_or_else(|| bad(format!("unknown level description '{}'", &caps[1])))?;
        if previous.is_some_and(|p| p >= level) {
            return Err(bad(format!("{level} paragraph out of order")));
        }
        previous = Some(level);
        match &category {
            Some(c) if c != &caps[2] => return Err(bad("paragraphs disagree on the category".into())),
            _ => category = Some(caps[2].to_string()),
        }
        let p: f64 = caps[3].parse().map_err(|_| bad("agreement".into()))?;
        if !(0.0..=100.0).contains(&p) {
            return Err(bad(format!("agreement {p} outside [0, 100]")));
        }
        let bullets: Vec<&str> = lines.collect();
        let expects_bullets = &caps[4] == LEAD_OUT;
        if expects_bullets != !bullets.is_empty() || bullets.len() > TOP_OBJECTS {
            return Err(bad(format!("{level} paragraph has {} bullets", bullets.len())));
        }
        let mut last = f64::INFINITY;
        for b in bullets {
            let (score, position, color) = match level {
                Level::Low => {
                    let c = LOW.captures(b).ok_or_else(|| bad(format!("bad low bullet '{b}'")))?;
                    (c[4].to_string(), Some(c[3].to_string()), Some(c[2].to_string()))
                }
                Level::Mid => {
                    let c = MID.captures(b).ok_or_else(|| bad(format!("bad mid bullet '{b}'")))?;
                    (c[3].to_string(), Some(c[2].to_string()), None)
                }
                Level::High => {
                    let c = HIGH.captures(b).ok_or_else(|| bad(format!("bad high bullet '{b}'")))?;
                    let stat: f64 = c[4].parse().map_err(|_| bad("statistical score".into()))?;
                    if stat > 1.0 {
                        return Err(bad(format!("statistical score {stat} above 1")));
                    }
                    (c[3].to_string(), None, None)
                }
            };
            if let Some(pos) = position {
                if !GridCell::ALL.iter().any(|g| g.name() == pos) {
                    return Err(bad(format!("unknown position '{pos}'")));
                }
            }
            if let Some(col) = color {
                if !NAMED_COLORS.iter().any(|(n, _)| *n == col) {
                    return Err(bad(format!("unknown color '{col}'")));
                }
            }
            let s: f64 = score.parse().map_err(|_| bad("score".into()))?;
            if !(0.0..=1.0).contains(&s) || s > last {
                return Err(bad(format!("{level} scores not non-increasing in [0, 1]")));
            }
            last = s;
        }
    }
    Ok(())
}

/// The image with the given boxes outlined, first box on top.
pub fn render_overlay(image: &RgbImage, boxes: &[BBox]) -> RgbImage {
    let mut out = image.clone();
    for (i, b) in boxes.iter().enumerate().rev() {
        out.draw_box(
            b.x0 as usize,
            b.y0 as usize,
            b.x1 as usize,
            b.y1 as usize,
            BOX_THICKNESS,
            BOX_COLORS[i % BOX_COLORS.len()],
        );
    }
    out
}

/// Segmentation maps side by side in provider order; segments outside
/// `keep` are dimmed to half intensity, background left as is.
pub fn render_masked_segmentation(maps: &[SegmentationMap], keep: &[(usize, u8)]) -> RgbImage {
    let (w, h) = maps.first().map_or((1, 1), |m| (m.width(), m.height()));
    let mut out = RgbImage::filled(w * maps.len().max(1), h, [0, 0, 0]);
    for (i, m) in maps.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let label = m.label(x, y);
                let mut c = segment_color(label);
                if label != m.background_id() && !keep.contains(&(m.provider_id(), label)) {
                    c = c.map(|v| v / 2);
                }
                out.put(i * w + x, y, c);
            }
        }
    }
    out
}

pub fn artifact_names(scene_id: u32) -> [String; 5] {
    let k = scene_key(scene_id);
    [
        format!("explanation_{k}.txt"),
        format!("explanation_{k}.json"),
        format!("heat_{k}.pgm"),
        format!("overlay_{k}.ppm"),
        format!("masked_seg_{k}.ppm"),
    ]
}

/// Writes the five artifacts of one explanation into `dir`.
pub fn write_explanation(e: &Explanation, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    let paths: Vec<PathBuf> = artifact_names(e.record.scene_id).iter().map(|n| dir.join(n)).collect();
    std::fs::write(&paths[0], &e.text).map_err(|err| Error::io(&paths[0], err))?;
    write_json(&paths[1], &e.record)?;
    save_pgm(&e.cumulative.to_gray(e.m_l.max(1) as f64), &paths[2])?;
    save_ppm(&e.overlay, &paths[3])?;
    save_ppm(&e.masked_segmentation, &paths[4])?;
    Ok(paths)
}
