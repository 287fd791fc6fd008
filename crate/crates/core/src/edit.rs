//! Raster edit operations: region copy/paste, string-image extraction and
//! pasting, text rendering and harmonic inpainting.
//!
//! Every operation that modifies a page also returns the mask of pixels it
//! actually changed, compared byte-for-byte against its input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font::{self, FontError, FontSpec};
use crate::raster::{luma, DocumentImage, Mask, Region};

pub const MAX_BLEND_RADIUS: u32 = 4;
pub const DEFAULT_INPAINT_MAX_ITERS: u32 = 5000;
pub const DEFAULT_INPAINT_TOL: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("region {region} is outside the {width}x{height} image")]
    OutOfBoundsRegion { region: Region, width: u32, height: u32 },
    #[error("patch is {patch_w}x{patch_h} but target is {target_w}x{target_h}")]
    DimensionMismatch { patch_w: u32, patch_h: u32, target_w: u32, target_h: u32 },
    #[error("blend radius {0} exceeds {MAX_BLEND_RADIUS}")]
    BlendRadius(u32),
    #[error("patch has a single gray level; nothing to binarize")]
    DegenerateHistogram,
    #[error("hole covers the whole image; no boundary data to inpaint from")]
    FullyMaskedImage,
    #[error("hole mask is empty or does not match its region")]
    InvalidHole,
    #[error(transparent)]
    Font(#[from] FontError),
}

fn check_region(image: &DocumentImage, region: Region) -> Result<(), EditError> {
    if region.fits_in(image.width(), image.height()) {
        Ok(())
    } else {
        Err(EditError::OutOfBoundsRegion { region, width: image.width(), height: image.height() })
    }
}

/// Rectangular RGB raster cut from (or destined for) a page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub w: u32,
    pub h: u32,
    pub pixels: Vec<u8>,
}

impl Patch {
    pub fn new(w: u32, h: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), w as usize * h as usize * 3, "patch buffer length");
        Patch { w, h, pixels }
    }

    pub fn filled(w: u32, h: u32, rgb: [u8; 3]) -> Self {
        Patch { w, h, pixels: rgb.iter().copied().cycle().take(w as usize * h as usize * 3).collect() }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.w as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn lumas(&self) -> Vec<u8> {
        self.pixels.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect()
    }
}

/// Glyphs with a transparent background: a binary coverage mask plus one ink color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringImage {
    pub w: u32,
    pub h: u32,
    /// Row-major, 1 where the glyph is inked.
    pub glyph_mask: Vec<u8>,
    pub fg_color: [u8; 3],
}

impl StringImage {
    pub fn foreground_count(&self) -> u64 {
        self.glyph_mask.iter().map(|&v| v as u64).sum()
    }
}

/// Pixels to synthesize inside `region`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMaskRegion {
    pub region: Region,
    /// Row-major over `region`, 1 marks a hole pixel.
    pub mask: Vec<u8>,
}

impl BinaryMaskRegion {
    /// Every pixel of `region` is a hole.
    pub fn full(region: Region) -> Self {
        BinaryMaskRegion { region, mask: vec![1; region.area() as usize] }
    }

    pub fn to_mask(&self, width: u32, height: u32) -> Mask {
        let mut m = Mask::zeros(width, height);
        for dy in 0..self.region.h {
            for dx in 0..self.region.w {
                if self.mask[(dy * self.region.w + dx) as usize] != 0 {
                    m.set(self.region.x + dx, self.region.y + dy, true);
                }
            }
        }
        m
    }
}

pub fn copy_region(image: &DocumentImage, region: Region) -> Result<Patch, EditError> {
    check_region(image, region)?;
    let mut pixels = Vec::with_capacity(region.area() as usize * 3);
    let raw = image.as_raw();
    let stride = image.width() as usize * 3;
    for y in region.y..region.bottom() {
        let start = y as usize * stride + region.x as usize * 3;
        pixels.extend_from_slice(&raw[start..start + region.w as usize * 3]);
    }
    Ok(Patch::new(region.w, region.h, pixels))
}

/// Overlay `patch` onto `target`. A positive `blend_radius` ramps opacity
/// linearly from the target border inward, reaching full opacity at that
/// depth; nothing outside the target is touched.
pub fn paste_patch(
    image: &DocumentImage,
    patch: &Patch,
    target: Region,
    blend_radius: u32,
) -> Result<(DocumentImage, Mask), EditError> {
    if patch.w != target.w || patch.h != target.h {
        return Err(EditError::DimensionMismatch {
            patch_w: patch.w,
            patch_h: patch.h,
            target_w: target.w,
            target_h: target.h,
        });
    }
    check_region(image, target)?;
    if blend_radius > MAX_BLEND_RADIUS {
        return Err(EditError::BlendRadius(blend_radius));
    }
    let mut out = image.clone();
    let mut changed = Mask::zeros(image.width(), image.height());
    for dy in 0..target.h {
        for dx in 0..target.w {
            let (x, y) = (target.x + dx, target.y + dy);
            let src = patch.pixel(dx, dy);
            let px = if blend_radius == 0 {
                src
            } else {
                let depth = dx.min(dy).min(target.w - 1 - dx).min(target.h - 1 - dy);
                let alpha = ((depth + 1) as f64 / (blend_radius + 1) as f64).min(1.0);
                let old = image.pixel(x, y);
                std::array::from_fn(|c| (alpha * src[c] as f64 + (1.0 - alpha) * old[c] as f64).round() as u8)
            };
            if px != image.pixel(x, y) {
                out.set_pixel(x, y, px);
                changed.set(x, y, true);
            }
        }
    }
    Ok((out, changed))
}

/// Otsu threshold over 8-bit samples: the level `t` maximizing the
/// between-class variance of `{v <= t}` versus `{v > t}`. Ties resolve to
/// the smallest `t`. `None` when fewer than two distinct levels occur.
pub fn otsu_threshold(samples: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in samples {
        hist[v as usize] += 1;
    }
    let n = samples.len() as u64;
    let total: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();

    // sigma_b^2 * n^2 = (n * s0 - n0 * total)^2 / (n0 * n1); compared as
    // exact fractions so plateaus and ties are resolved deterministically.
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..255usize {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n as i128 * s0 as i128 - n0 as i128 * total as i128).unsigned_abs();
        let num = d * d;
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => fraction_gt(num, den, bn, bd),
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// `a/b > c/d` for non-negative fractions.
fn fraction_gt(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64 / b as f64) > (c as f64 / d as f64),
    }
}

/// Otsu-binarizes a text patch. The darker class becomes the glyph mask and
/// its mean RGB the ink color.
pub fn binarize_otsu(patch: &Patch) -> Result<StringImage, EditError> {
    let lumas = patch.lumas();
    let t = otsu_threshold(&lumas).ok_or(EditError::DegenerateHistogram)?;
    let glyph_mask: Vec<u8> = lumas.iter().map(|&l| u8::from(l <= t)).collect();
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for (p, &m) in patch.pixels.chunks_exact(3).zip(&glyph_mask) {
        if m == 1 {
            n += 1;
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
        }
    }
    let fg_color = std::array::from_fn(|c| ((2 * sum[c] + n) / (2 * n)) as u8);
    Ok(StringImage { w: patch.w, h: patch.h, glyph_mask, fg_color })
}

/// Renders text onto a white patch tightly cropped to the inked pixels.
pub fn render_text(text: &str, font: &FontSpec, px_height: u32, color: [u8; 3]) -> Result<Patch, EditError> {
    let r = font::rasterize(text, font, px_height, color)?;
    Ok(Patch::new(r.width, r.height, r.rgb))
}

/// Writes the ink color wherever the glyph mask is set, top-left at `(x, y)`.
pub fn paste_string_image(
    image: &DocumentImage,
    s: &StringImage,
    x: u32,
    y: u32,
) -> Result<(DocumentImage, Mask), EditError> {
    let region = Region::new(x, y, s.w, s.h);
    check_region(image, region)?;
    let mut out = image.clone();
    let mut changed = Mask::zeros(image.width(), image.height());
    for dy in 0..s.h {
        for dx in 0..s.w {
            if s.glyph_mask[(dy * s.w + dx) as usize] == 1 {
                let (px, py) = (x + dx, y + dy);
                if image.pixel(px, py) != s.fg_color {
                    out.set_pixel(px, py, s.fg_color);
                    changed.set(px, py, true);
                }
            }
        }
    }
    Ok((out, changed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InpaintParams {
    pub max_iters: u32,
    pub tol: f64,
}

impl Default for InpaintParams {
    fn default() -> Self {
        InpaintParams { max_iters: DEFAULT_INPAINT_MAX_ITERS, tol: DEFAULT_INPAINT_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct InpaintOutcome {
    pub image: DocumentImage,
    pub changed: Mask,
    pub iterations: u32,
    pub converged: bool,
    /// Largest `|sum(neighbors) - k * u|` over hole pixels and channels.
    pub max_residual: f64,
}

/// Harmonic fill of the hole: each hole pixel converges to the mean of its
/// in-image 4-neighbors (Laplace equation with the surrounding pixels as
/// Dirichlet data and reflecting image borders). Gauss-Seidel sweeps in
/// row-major order until both the discrete Laplacian residual and the
/// estimated distance to the exact solution drop below `tol`, or
/// `max_iters` sweeps have run.
pub fn inpaint_diffusion(image: &DocumentImage, hole: &BinaryMaskRegion, params: InpaintParams) -> Result<InpaintOutcome, EditError> {
    check_region(image, hole.region)?;
    if hole.mask.len() != hole.region.area() as usize || hole.mask.iter().all(|&v| v == 0) {
        return Err(EditError::InvalidHole);
    }
    let full = hole.to_mask(image.width(), image.height());
    if full.count() == full.len() as u64 {
        return Err(EditError::FullyMaskedImage);
    }
    let (w, h) = (image.width() as i64, image.height() as i64);

    // Unknowns in row-major order, each with neighbor references.
    #[derive(Clone, Copy)]
    enum Nb {
        Unknown(usize),
        Known([f64; 3]),
    }
    let mut index = vec![usize::MAX; hole.region.area() as usize];
    let mut coords = Vec::new();
    for dy in 0..hole.region.h {
        for dx in 0..hole.region.w {
            let li = (dy * hole.region.w + dx) as usize;
            if hole.mask[li] != 0 {
                index[li] = coords.len();
                coords.push((hole.region.x + dx, hole.region.y + dy));
            }
        }
    }
    let local = |x: i64, y: i64| -> Option<usize> {
        let r = hole.region;
        if x >= r.x as i64 && x < r.right() as i64 && y >= r.y as i64 && y < r.bottom() as i64 {
            let li = ((y - r.y as i64) as u32 * r.w + (x - r.x as i64) as u32) as usize;
            (index[li] != usize::MAX).then_some(index[li])
        } else {
            None
        }
    };
    let neighbors: Vec<Vec<Nb>> = coords
        .iter()
        .map(|&(x, y)| {
            [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                .iter()
                .filter_map(|&(ox, oy)| {
                    let (nx, ny) = (x as i64 + ox, y as i64 + oy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        return None;
                    }
                    Some(match local(nx, ny) {
                        Some(i) => Nb::Unknown(i),
                        None => {
                            let p = image.pixel(nx as u32, ny as u32);
                            Nb::Known([p[0] as f64, p[1] as f64, p[2] as f64])
                        }
                    })
                })
                .collect()
        })
        .collect();

    // Start from the mean of the known boundary pixels.
    let mut bsum = [0f64; 3];
    let mut bn = 0usize;
    for nbs in &neighbors {
        for nb in nbs {
            if let Nb::Known(p) = nb {
                for c in 0..3 {
                    bsum[c] += p[c];
                }
                bn += 1;
            }
        }
    }
    let init: [f64; 3] = std::array::from_fn(|c| bsum[c] / bn.max(1) as f64);
    let mut u = vec![init; coords.len()];

    let residual = |u: &[[f64; 3]]| -> f64 {
        let mut worst = 0f64;
        for (i, nbs) in neighbors.iter().enumerate() {
            for c in 0..3 {
                let s: f64 = nbs
                    .iter()
                    .map(|nb| match nb {
                        Nb::Unknown(j) => u[*j][c],
                        Nb::Known(p) => p[c],
                    })
                    .sum();
                worst = worst.max((s - nbs.len() as f64 * u[i][c]).abs());
            }
        }
        worst
    };

    let mut iterations = 0;
    let mut max_residual = residual(&u);
    let mut error_bound = f64::INFINITY;
    let mut prev_update = f64::INFINITY;
    while (max_residual >= params.tol || error_bound >= params.tol) && iterations < params.max_iters {
        let mut update = 0f64;
        for i in 0..u.len() {
            let nbs = &neighbors[i];
            let k = nbs.len() as f64;
            let mut s = [0f64; 3];
            for nb in nbs {
                let p = match nb {
                    Nb::Unknown(j) => u[*j],
                    Nb::Known(p) => *p,
                };
                for c in 0..3 {
                    s[c] += p[c];
                }
            }
            let next: [f64; 3] = std::array::from_fn(|c| s[c] / k);
            for c in 0..3 {
                update = update.max((next[c] - u[i][c]).abs());
            }
            u[i] = next;
        }
        iterations += 1;
        max_residual = residual(&u);
        // Contraction estimate from successive sweep updates bounds the
        // remaining error by rho / (1 - rho) * update.
        let rho = update / prev_update;
        error_bound = if update == 0.0 {
            0.0
        } else if rho < 1.0 {
            rho / (1.0 - rho) * update
        } else {
            f64::INFINITY
        };
        prev_update = update;
    }

    let mut out = image.clone();
    let mut changed = Mask::zeros(image.width(), image.height());
    for (&(x, y), v) in coords.iter().zip(&u) {
        let px = std::array::from_fn(|c| v[c].round().clamp(0.0, 255.0) as u8);
        if px != image.pixel(x, y) {
            out.set_pixel(x, y, px);
            changed.set(x, y, true);
        }
    }
    Ok(InpaintOutcome {
        image: out,
        changed,
        iterations,
        converged: max_residual < params.tol && error_bound < params.tol,
        max_residual,
    })
}
