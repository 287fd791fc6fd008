//! Bundled bitmap fonts and an exact area-coverage text rasterizer.
//!
//! Fonts live in the crate's `fonts/` directory and are compiled in, so
//! rendering never depends on what is installed on the host. Each glyph is
//! a grid of inked cells; rendering scales the grid so the cap height equals
//! the requested pixel height, snaps cell edges to the pixel grid, and
//! computes for every output pixel the exact fraction of its area covered by
//! inked cells.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MONO5X7: &str = include_str!("../fonts/mono5x7.font");
const COMPACT3X5: &str = include_str!("../fonts/compact3x5.font");

/// Names of the bundled fonts, in lookup order.
pub const BUNDLED_FONTS: &[&str] = &["mono5x7", "compact3x5"];

#[derive(Debug, Error)]
pub enum FontError {
    #[error("unknown font {0:?}")]
    UnknownFont(String),
    #[error("text is empty")]
    EmptyText,
    #[error("pixel height must be at least 1")]
    ZeroHeight,
    #[error("font file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Font selector; resolves only against the bundled set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FontSpec(pub String);

impl FontSpec {
    pub fn new(name: impl Into<String>) -> Self {
        FontSpec(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl Default for FontSpec {
    fn default() -> Self {
        FontSpec::new("mono5x7")
    }
}

#[derive(Debug, Clone)]
struct Glyph {
    width: u32,
    /// Row-major inked cells, `rows * width` entries.
    cells: Vec<bool>,
    rows: u32,
}

#[derive(Debug, Clone)]
pub struct BitmapFont {
    pub name: String,
    pub version: u32,
    /// Rows from the top of the cell to the baseline.
    pub cap: u32,
    /// Rows below the baseline.
    pub descent: u32,
    /// Rows occupied by lowercase letters without ascenders.
    pub x_height: u32,
    glyphs: HashMap<char, Glyph>,
}

impl BitmapFont {
    pub fn parse(src: &str) -> Result<Self, FontError> {
        let mut name = None;
        let mut version = 1;
        let (mut cap, mut descent, mut x_height) = (0u32, 0u32, 0u32);
        let mut glyphs = HashMap::new();
        let mut current: Option<(char, Vec<String>)> = None;

        let finish = |cur: Option<(char, Vec<String>)>, glyphs: &mut HashMap<char, Glyph>, line: usize| -> Result<(), FontError> {
            if let Some((ch, rows)) = cur {
                let width = rows.first().map(|r| r.chars().count()).unwrap_or(0) as u32;
                if rows.iter().any(|r| r.chars().count() as u32 != width) {
                    return Err(FontError::Parse { line, msg: format!("ragged glyph {ch:?}") });
                }
                let cells = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
                glyphs.insert(ch, Glyph { width, cells, rows: rows.len() as u32 });
            }
            Ok(())
        };

        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim_end();
            if line.starts_with('#') && !line.chars().all(|c| c == '#' || c == '.') {
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or_default();
            let val = parts.next().unwrap_or_default().trim();
            let num = || {
                val.parse::<u32>()
                    .map_err(|e| FontError::Parse { line: i + 1, msg: e.to_string() })
            };
            match key {
                "font" => name = Some(val.to_string()),
                "version" => version = num()?,
                "cap" => cap = num()?,
                "descent" => descent = num()?,
                "xheight" => x_height = num()?,
                "glyph" => {
                    finish(current.take(), &mut glyphs, i + 1)?;
                    let ch = match val {
                        "space" => ' ',
                        v if v.chars().count() == 1 => v.chars().next().unwrap(),
                        v => return Err(FontError::Parse { line: i + 1, msg: format!("bad glyph name {v:?}") }),
                    };
                    current = Some((ch, Vec::new()));
                }
                _ if line.chars().all(|c| c == '#' || c == '.') => match current.as_mut() {
                    Some((_, rows)) => rows.push(line.to_string()),
                    None => return Err(FontError::Parse { line: i + 1, msg: "row outside glyph".into() }),
                },
                other => return Err(FontError::Parse { line: i + 1, msg: format!("unknown key {other:?}") }),
            }
        }
        finish(current.take(), &mut glyphs, src.lines().count())?;
        let name = name.ok_or(FontError::Parse { line: 0, msg: "missing font name".into() })?;
        if cap == 0 {
            return Err(FontError::Parse { line: 0, msg: "cap must be positive".into() });
        }
        Ok(BitmapFont { name, version, cap, descent, x_height, glyphs })
    }

    pub fn has_glyph(&self, ch: char) -> bool {
        self.glyphs.contains_key(&ch)
    }

    fn glyph(&self, ch: char) -> Option<&Glyph> {
        self.glyphs
            .get(&ch)
            .or_else(|| ch.to_uppercase().next().and_then(|u| self.glyphs.get(&u)))
    }

    /// Cell width used for spacing and the fallback box glyph.
    fn em_width(&self) -> u32 {
        self.glyphs.get(&'0').map(|g| g.width).unwrap_or(self.cap * 5 / 7).max(1)
    }
}

fn registry() -> &'static HashMap<&'static str, BitmapFont> {
    static FONTS: OnceLock<HashMap<&'static str, BitmapFont>> = OnceLock::new();
    FONTS.get_or_init(|| {
        [("mono5x7", MONO5X7), ("compact3x5", COMPACT3X5)]
            .into_iter()
            .map(|(n, src)| (n, BitmapFont::parse(src).expect("bundled font parses")))
            .collect()
    })
}

pub fn font(spec: &FontSpec) -> Result<&'static BitmapFont, FontError> {
    registry()
        .get(spec.name())
        .ok_or_else(|| FontError::UnknownFont(spec.name().to_string()))
}

/// Bundled font whose native x-height is closest to `target_height`
/// pixels; ties resolve to the earlier entry of [`BUNDLED_FONTS`].
pub fn closest_font_by_x_height(target_height: u32) -> FontSpec {
    let best = BUNDLED_FONTS
        .iter()
        .min_by_key(|name| {
            let f = &registry()[*name];
            (f.x_height as i64 - target_height as i64).abs()
        })
        .expect("at least one bundled font");
    FontSpec::new(*best)
}

/// Rasterized text: coverage per pixel plus the composited RGB patch.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedText {
    pub width: u32,
    pub height: u32,
    /// Ink coverage in [0, 1], row-major.
    pub alpha: Vec<f32>,
    /// RGB over a white background, row-major.
    pub rgb: Vec<u8>,
    /// Glyph baseline row within the patch.
    pub baseline: u32,
}

impl RenderedText {
    /// Total ink area in pixels, rounded.
    pub fn coverage(&self) -> u64 {
        self.alpha.iter().map(|&a| a as f64).sum::<f64>().round() as u64
    }
}

/// Renders `text` with cap height `px_height` in `color` over white and
/// crops to the tight bounding box of inked pixels.
pub fn rasterize(text: &str, spec: &FontSpec, px_height: u32, color: [u8; 3]) -> Result<RenderedText, FontError> {
    rasterize_at(text, spec, px_height, color, 0.0)
}

/// Like [`rasterize`], with the string shifted right by the subpixel
/// offset `phase` (in `[0, 1)`), which anti-aliases vertical stroke edges.
///
/// At scales of one pixel per cell or more, cell edges are snapped to whole
/// pixels so every stroke is at least one pixel wide; smaller scales fall
/// back to exact area coverage.
pub fn rasterize_at(text: &str, spec: &FontSpec, px_height: u32, color: [u8; 3], phase: f64) -> Result<RenderedText, FontError> {
    let f = font(spec)?;
    let phase = if phase.is_finite() { phase.rem_euclid(1.0) } else { 0.0 };
    if text.is_empty() {
        return Err(FontError::EmptyText);
    }
    if px_height == 0 {
        return Err(FontError::ZeroHeight);
    }
    let scale = px_height as f64 / f.cap as f64;
    let em = f.em_width();
    let fallback = Glyph {
        width: em,
        rows: f.cap,
        cells: (0..f.cap)
            .flat_map(|r| (0..em).map(move |c| r == 0 || r == f.cap - 1 || c == 0 || c == em - 1))
            .collect(),
    };

    // Inked cells as rectangles in pixel space.
    let mut rects: Vec<[f64; 4]> = Vec::new();
    let edge = |k: u32| {
        let e = k as f64 * scale;
        if scale >= 1.0 {
            e.round()
        } else {
            e
        }
    };
    let mut pen = 0u32;
    for ch in text.chars() {
        let g = f.glyph(ch).unwrap_or(&fallback);
        for r in 0..g.rows {
            for c in 0..g.width {
                if g.cells[(r * g.width + c) as usize] {
                    let (x0, x1) = (edge(pen + c) + phase, edge(pen + c + 1) + phase);
                    rects.push([x0, edge(r), x1, edge(r + 1)]);
                }
            }
        }
        pen += g.width + 1;
    }

    let full_w = (edge(pen) + phase).ceil() as u32 + 1;
    let full_h = edge(f.cap + f.descent).ceil() as u32 + 1;
    let mut alpha = vec![0f64; full_w as usize * full_h as usize];
    for [x0, y0, x1, y1] in &rects {
        let (px0, py0) = (x0.floor() as u32, y0.floor() as u32);
        let (px1, py1) = (x1.ceil() as u32, y1.ceil() as u32);
        for py in py0..py1.min(full_h) {
            let oy = (y1.min(py as f64 + 1.0) - y0.max(py as f64)).max(0.0);
            for px in px0..px1.min(full_w) {
                let ox = (x1.min(px as f64 + 1.0) - x0.max(px as f64)).max(0.0);
                alpha[py as usize * full_w as usize + px as usize] += ox * oy;
            }
        }
    }
    const EPS: f64 = 1e-9;
    let (mut bx0, mut by0, mut bx1, mut by1) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..full_h {
        for x in 0..full_w {
            if alpha[(y * full_w + x) as usize] > EPS {
                bx0 = bx0.min(x);
                by0 = by0.min(y);
                bx1 = bx1.max(x + 1);
                by1 = by1.max(y + 1);
            }
        }
    }
    if bx0 == u32::MAX {
        // Whitespace only: a one-pixel blank patch keeps the contract simple.
        return Ok(RenderedText {
            width: 1,
            height: 1,
            alpha: vec![0.0],
            rgb: vec![255; 3],
            baseline: 0,
        });
    }
    let (w, h) = (bx1 - bx0, by1 - by0);
    let mut out_alpha = Vec::with_capacity((w * h) as usize);
    let mut rgb = Vec::with_capacity((w * h * 3) as usize);
    for y in by0..by1 {
        for x in bx0..bx1 {
            let a = alpha[(y * full_w + x) as usize].clamp(0.0, 1.0);
            out_alpha.push(a as f32);
            for &c in &color {
                rgb.push((255.0 * (1.0 - a) + c as f64 * a).round() as u8);
            }
        }
    }
    let baseline = edge(f.cap).round() as u32;
    Ok(RenderedText {
        width: w,
        height: h,
        alpha: out_alpha,
        rgb,
        baseline: baseline.saturating_sub(by0),
    })
}
