//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fdvied::edit::{BinaryMaskRegion, Patch};
use fdvied::raster::{DocumentImage, Mask, Region};
use fdvied::OcrAnnotation;
use rand::Rng;

/// Integer luma with the usual 299/587/114 weights, rounded half up.
pub fn luma_ref(p: [u8; 3]) -> u8 {
    ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8
}

/// Exhaustive Otsu: for every threshold t, split the raw samples into
/// `v <= t` and `v > t` and compare `n0*n1*(mu0-mu1)^2` exactly as
/// `(n1*s0 - n0*s1)^2 / (n0*n1)`. First maximum wins.
pub fn otsu_oracle(samples: &[u8]) -> Option<u8> {
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u16 {
        let (mut n0, mut s0, mut n1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for &v in samples {
            if v as u16 <= t {
                n0 += 1;
                s0 += v as i128;
            } else {
                n1 += 1;
                s1 += v as i128;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n1 * s0 - n0 * s1).unsigned_abs();
        let num = d * d;
        let den = (n0 * n1) as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|b| b.0)
}

/// Random patch: bimodal text-like, noisy, or few-level.
pub fn random_patch<R: Rng>(rng: &mut R) -> Patch {
    let w = rng.gen_range(2..=40);
    let h = rng.gen_range(2..=24);
    let kind = rng.gen_range(0..3);
    let ink: [u8; 3] = std::array::from_fn(|_| rng.gen_range(0..100));
    let paper: [u8; 3] = std::array::from_fn(|_| rng.gen_range(150..=255));
    let mut pixels = Vec::with_capacity((w * h * 3) as usize);
    for _ in 0..w * h {
        let p: [u8; 3] = match kind {
            0 => {
                let base = if rng.gen_bool(0.3) { ink } else { paper };
                base.map(|c| (c as i32 + rng.gen_range(-12..=12)).clamp(0, 255) as u8)
            }
            1 => std::array::from_fn(|_| rng.gen()),
            _ => {
                let l = [20u8, 90, 160, 230][rng.gen_range(0..4)];
                [l, l, l]
            }
        };
        pixels.extend_from_slice(&p);
    }
    Patch::new(w, h, pixels)
}

/// Smooth gradient page with mild noise.
pub fn random_page<R: Rng>(rng: &mut R, w: u32, h: u32) -> DocumentImage {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(60.0..200.0));
    let gx: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let gy: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let mut buf = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = base[c] + gx[c] * x as f64 + gy[c] * y as f64 + rng.gen_range(-20.0..20.0);
                buf.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    DocumentImage::from_raw("page", w, h, buf).unwrap()
}

/// Random hole no larger than 16x16: a rectangle, optionally with pixels
/// knocked out (always keeping at least one).
pub fn random_hole<R: Rng>(rng: &mut R, img_w: u32, img_h: u32) -> BinaryMaskRegion {
    let w = rng.gen_range(1..=16);
    let h = rng.gen_range(1..=16);
    let x = rng.gen_range(0..=img_w - w);
    let y = rng.gen_range(0..=img_h - h);
    let mut mask = vec![1u8; (w * h) as usize];
    if rng.gen_bool(0.5) {
        for m in mask.iter_mut() {
            if rng.gen_bool(0.3) {
                *m = 0;
            }
        }
        let keep = rng.gen_range(0..mask.len());
        mask[keep] = 1;
    }
    BinaryMaskRegion { region: Region::new(x, y, w, h), mask }
}

/// Solves the discrete Laplace equation on the hole directly: for every
/// hole pixel, `k*u - sum(unknown neighbors) = sum(known neighbors)`, where
/// neighbors are the in-image 4-neighbors and `k` their count. Gaussian
/// elimination with partial pivoting, one channel at a time.
pub fn dense_inpaint_oracle(image: &DocumentImage, hole: &BinaryMaskRegion) -> BTreeMap<(u32, u32), [f64; 3]> {
    let r = hole.region;
    let mut ids = BTreeMap::new();
    let mut coords = Vec::new();
    for dy in 0..r.h {
        for dx in 0..r.w {
            if hole.mask[(dy * r.w + dx) as usize] != 0 {
                ids.insert((r.x + dx, r.y + dy), coords.len());
                coords.push((r.x + dx, r.y + dy));
            }
        }
    }
    let n = coords.len();
    let mut out = BTreeMap::new();
    let mut sol = vec![[0f64; 3]; n];
    for c in 0..3 {
        let mut a = vec![vec![0f64; n + 1]; n];
        for (i, &(x, y)) in coords.iter().enumerate() {
            for (ox, oy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + ox, y as i64 + oy);
                if nx < 0 || ny < 0 || nx >= image.width() as i64 || ny >= image.height() as i64 {
                    continue;
                }
                a[i][i] += 1.0;
                match ids.get(&(nx as u32, ny as u32)) {
                    Some(&j) => a[i][j] -= 1.0,
                    None => a[i][n] += image.pixel(nx as u32, ny as u32)[c] as f64,
                }
            }
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for row in 0..n {
                if row != col && a[row][col] != 0.0 {
                    let f = a[row][col] / d;
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        for i in 0..n {
            sol[i][c] = a[i][n] / a[i][i];
        }
    }
    for (i, p) in coords.into_iter().enumerate() {
        out.insert(p, sol[i]);
    }
    out
}

/// IoU of each class from set sizes, then their mean.
pub fn brute_miou(pred: &Mask, gt: &Mask) -> f64 {
    let (mut inter_f, mut union_f, mut inter_a, mut union_a) = (0u64, 0u64, 0u64, 0u64);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let (p, g) = (pred.get(x, y), gt.get(x, y));
            inter_f += (p && g) as u64;
            union_f += (p || g) as u64;
            inter_a += (!p && !g) as u64;
            union_a += (!p || !g) as u64;
        }
    }
    let iou = |i: u64, u: u64| if u == 0 { 1.0 } else { i as f64 / u as f64 };
    (iou(inter_f, union_f) + iou(inter_a, union_a)) / 2.0
}

pub fn random_mask<R: Rng>(rng: &mut R, w: u32, h: u32, density: f64) -> Mask {
    let mut m = Mask::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(density) {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Sliding-window blank search computing each window's per-channel
/// population standard deviation directly in floating point.
pub fn blank_oracle(image: &DocumentImage, annot: &OcrAnnotation, min_w: u32, min_h: u32, stride: u32, std_max: f64) -> Vec<Region> {
    let (w, h) = (min_w.max(4), min_h.max(4));
    if w > image.width() || h > image.height() {
        return vec![];
    }
    let mut kept: Vec<Region> = vec![];
    let mut y = 0;
    while y + h <= image.height() {
        let mut x = 0;
        while x + w <= image.width() {
            let cand = Region::new(x, y, w, h);
            let overlaps_word = annot.words.iter().any(|wb| {
                let r = wb.rect;
                r.x < x + w && x < r.x + r.w && r.y < y + h && y < r.y + r.h
            });
            let overlaps_kept = kept.iter().any(|k| k.x < x + w && x < k.x + k.w && k.y < y + h && y < k.y + k.h);
            if !overlaps_word && !overlaps_kept {
                let flat = (0..3).all(|c| {
                    let vals: Vec<f64> = (y..y + h)
                        .flat_map(|yy| (x..x + w).map(move |xx| (xx, yy)))
                        .map(|(xx, yy)| image.pixel(xx, yy)[c] as f64)
                        .collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                    var.sqrt() < std_max
                });
                if flat {
                    kept.push(cand);
                }
            }
            x += stride;
        }
        y += stride;
    }
    kept
}

/// Relative paths and contents of every file under `root`, sorted.
pub fn tree_contents(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = vec![];
    walk(root, root, &mut out);
    out.sort();
    out
}
