mod common;

use fdvied::corpus::{find_blank_regions, BLANK_STD_MAX, BLANK_STRIDE};
use fdvied::edit::{self, binarize_otsu, inpaint_diffusion, otsu_threshold, InpaintParams};
use fdvied::eval::{confusion, miou};
use fdvied::font::{self, FontSpec};
use fdvied::raster::{luma, DocumentImage, Mask, Region};
use fdvied::synth::synth_receipt;
use fdvied::{OcrAnnotation, WordBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn luma_matches_reference_on_all_gray_and_random_colors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for v in 0..=255u8 {
        assert_eq!(luma([v, v, v]), v);
    }
    for _ in 0..10_000 {
        let p: [u8; 3] = rng.gen();
        assert_eq!(luma(p), luma_ref(p));
    }
}

#[test]
fn otsu_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let patch = random_patch(&mut rng);
        let lumas: Vec<u8> = patch.pixels.chunks_exact(3).map(|p| luma_ref([p[0], p[1], p[2]])).collect();
        assert_eq!(otsu_threshold(&lumas), otsu_oracle(&lumas));
    }
}

#[test]
fn otsu_two_level_patch() {
    let mut samples = vec![30u8; 50];
    samples.extend(std::iter::repeat_n(220u8, 50));
    let t = otsu_threshold(&samples).unwrap();
    assert_eq!(Some(t), otsu_oracle(&samples));
    assert!((30..220).contains(&t));
    let mut px = Vec::new();
    for &s in &samples {
        px.extend_from_slice(&[s, s, s]);
    }
    let s = binarize_otsu(&edit::Patch::new(10, 10, px)).unwrap();
    assert_eq!(s.foreground_count(), 50);
    assert_eq!(s.fg_color, [30, 30, 30]);
}

#[test]
fn binarized_glyphs_track_renderer_coverage() {
    // Anti-aliased fixtures across the sizes the synthetic receipts use.
    // At a phase of exactly one half, a one-pixel stroke becomes two
    // half-covered pixels that no threshold can split, so that phase is
    // checked separately below.
    let texts = ["1280", "TOTAL", "Green Tea", "$99", "gjp", "THANK YOU", "¥2,960", "Milk", "2024/12/06"];
    for text in texts {
        for spec in ["mono5x7", "compact3x5"] {
            for px in 9..=24u32 {
                for phase in [0.0, 0.1, 0.2, 0.35, 0.65, 0.8, 0.9] {
                    let r = font::rasterize_at(text, &FontSpec::new(spec), px, [0, 0, 0], phase).unwrap();
                    let s = binarize_otsu(&edit::Patch::new(r.width, r.height, r.rgb.clone())).unwrap();
                    let cov = r.coverage() as f64;
                    let fg = s.foreground_count() as f64;
                    assert!(
                        (fg - cov).abs() <= 0.1 * cov,
                        "{text} {spec} px{px} phase {phase}: fg {fg} vs coverage {cov}"
                    );
                }
            }
        }
    }
}

#[test]
fn half_pixel_phase_keeps_all_or_none_of_each_edge_pair() {
    let r = font::rasterize_at("1280", &FontSpec::default(), 9, [0, 0, 0], 0.5).unwrap();
    let s = binarize_otsu(&edit::Patch::new(r.width, r.height, r.rgb.clone())).unwrap();
    let half: Vec<bool> = r.alpha.iter().map(|&a| (a - 0.5).abs() < 1e-6).collect();
    let kept: Vec<bool> = half.iter().zip(&s.glyph_mask).filter(|(h, _)| **h).map(|(_, &m)| m == 1).collect();
    assert!(!kept.is_empty());
    assert!(kept.iter().all(|&k| k == kept[0]));
}

#[test]
fn inpainting_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..30 {
        let (w, h) = (rng.gen_range(64..=96), rng.gen_range(64..=96));
        let img = random_page(&mut rng, w, h);
        let hole = random_hole(&mut rng, w, h);
        let tol = if i % 2 == 0 { 0.1 } else { InpaintParams::default().tol };
        let out = inpaint_diffusion(&img, &hole, InpaintParams { max_iters: 20_000, tol }).unwrap();
        assert!(out.converged);
        let exact = dense_inpaint_oracle(&img, &hole);
        for (&(x, y), v) in &exact {
            let got = out.image.pixel(x, y);
            for c in 0..3 {
                assert!((got[c] as f64 - v[c]).abs() <= 1.0, "hole {:?} at ({x},{y}) c{c}: {} vs {:.3}", hole.region, got[c], v[c]);
            }
        }
        // Nothing outside the hole moves.
        let holemask = hole.to_mask(w, h);
        for y in 0..h {
            for x in 0..w {
                if !holemask.get(x, y) {
                    assert_eq!(out.image.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }
}

#[test]
fn inpainting_sixteen_square_at_tol_point_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let img = random_page(&mut rng, 64, 64);
    let hole = edit::BinaryMaskRegion::full(Region::new(12, 10, 16, 16));
    let out = inpaint_diffusion(&img, &hole, InpaintParams { max_iters: 5000, tol: 0.1 }).unwrap();
    let exact = dense_inpaint_oracle(&img, &hole);
    for (&(x, y), v) in &exact {
        let got = out.image.pixel(x, y);
        for c in 0..3 {
            assert!((got[c] as f64 - v[c]).abs() <= 1.0);
        }
    }
}

#[test]
fn confusion_and_miou_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (w, h) = (32, 32);
        let d = rng.gen_range(0.0..1.0);
        let gt = random_mask(&mut rng, w, h, d);
        let pd = rng.gen_range(0.0..1.0);
        let pred = random_mask(&mut rng, w, h, pd);
        let c = confusion(&pred, &gt).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for y in 0..h {
            for x in 0..w {
                match (pred.get(x, y), gt.get(x, y)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (tp, fp, fn_, tn));
        assert!((miou(&c) - brute_miou(&pred, &gt)).abs() <= 1e-12);
    }
}

fn flat_page(w: u32, h: u32, v: u8) -> DocumentImage {
    DocumentImage::filled("p", w, h, [v, v, v]).unwrap()
}

#[test]
fn blank_regions_match_sliding_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..12 {
        let (img, annot) = synth_receipt(&format!("r{i}"), rng.gen());
        let (mw, mh) = (rng.gen_range(4..=60), rng.gen_range(4..=20));
        let mut got = find_blank_regions(&img, &annot, mw, mh);
        let mut want = blank_oracle(&img, &annot, mw, mh, BLANK_STRIDE, BLANK_STD_MAX as f64);
        got.sort_by_key(|r| (r.y, r.x));
        want.sort_by_key(|r| (r.y, r.x));
        assert_eq!(got, want, "receipt {i}, {mw}x{mh}");
    }
}

#[test]
fn known_margin_next_to_price_is_found() {
    // Flat page with a price word at the right; the 60x20 strip to its
    // left is blank by construction.
    let mut img = flat_page(200, 120, 240);
    for y in 42..54 {
        for x in 150..190 {
            if (x + y) % 3 == 0 {
                img.set_pixel(x, y, [20, 20, 20]);
            }
        }
    }
    // Texture everywhere except the margin and the word.
    let margin = Region::new(88, 40, 60, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for y in 0..120 {
        for x in 0..200 {
            let in_word = (148..192).contains(&x) && (40..56).contains(&y);
            if !margin.contains_point(x, y) && !in_word {
                let v = rng.gen_range(0..=255);
                img.set_pixel(x, y, [v, v, v]);
            }
        }
    }
    let annot = OcrAnnotation {
        document_id: "p".into(),
        image_width: 200,
        image_height: 120,
        image: None,
        words: vec![WordBox { rect: Region::new(148, 40, 44, 16), text: "¥980".into(), tag: Some("price".into()) }],
    };
    let found = find_blank_regions(&img, &annot, 60, 20);
    let want = blank_oracle(&img, &annot, 60, 20, BLANK_STRIDE, BLANK_STD_MAX as f64);
    assert_eq!(found, want);
    assert_eq!(found, vec![margin]);
}

#[test]
fn copy_region_matches_manual_slice() {
    let mut img = flat_page(64, 64, 0);
    for y in 0..64 {
        for x in 0..64 {
            img.set_pixel(x, y, [x as u8 * 4, y as u8 * 4, (x + y) as u8]);
        }
    }
    let p = edit::copy_region(&img, Region::new(10, 10, 20, 20)).unwrap();
    let mut want = Vec::new();
    for y in 10..30u32 {
        for x in 10..30u32 {
            want.extend_from_slice(&[x as u8 * 4, y as u8 * 4, (x + y) as u8]);
        }
    }
    assert_eq!(p.pixels, want);
}

#[test]
fn string_paste_changes_exactly_the_glyph_pixels() {
    let img = flat_page(80, 64, 255);
    let r = font::rasterize("680", &FontSpec::default(), 14, [0, 0, 0]).unwrap();
    let s = binarize_otsu(&edit::Patch::new(r.width, r.height, r.rgb.clone())).unwrap();
    let (out, changed) = edit::paste_string_image(&img, &s, 5, 5).unwrap();
    assert_eq!(changed.count(), s.foreground_count());
    assert_eq!(out.diff_mask(&img).unwrap(), changed);
}

#[test]
fn black_patch_paste_mask_is_target_rect() {
    let img = flat_page(64, 64, 255);
    let patch = edit::Patch::filled(10, 7, [0, 0, 0]);
    let target = Region::new(20, 30, 10, 7);
    let (out, changed) = edit::paste_patch(&img, &patch, target, 0).unwrap();
    assert_eq!(changed, Mask::from_region(64, 64, target));
    assert_eq!(out.diff_mask(&img).unwrap(), changed);
}
