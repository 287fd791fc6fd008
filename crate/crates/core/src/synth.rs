//! Synthetic receipt pages with exact word annotations, used as a stand-in
//! corpus when no real scanned receipts are available.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{OcrAnnotation, WordBox};
use crate::font::{self, FontSpec};
use crate::raster::{DocumentImage, Region};

/// Padding added around the inked box of every annotated word.
pub const WORD_PAD: u32 = 2;

const ITEMS: &[&str] = &[
    "Milk", "Bread", "Eggs", "Coffee", "Rice", "Apples", "Green Tea", "Butter", "Cheese", "Juice", "Soap", "Tofu",
    "Noodles", "Sugar", "Yogurt", "Bananas", "Salmon", "Miso", "Onions", "Water",
];
const STORES: &[&str] = &["FRESH MART", "SUNNY STORE", "CITY MARKET", "GREEN GROCER", "DAILY SHOP"];

struct Page {
    width: u32,
    height: u32,
    rgb: Vec<f64>,
}

impl Page {
    fn draw_text(&mut self, text: &str, spec: &FontSpec, px: u32, ink: [u8; 3], x: u32, top: u32) -> Option<Region> {
        // Vary the subpixel phase with position so stroke edges are anti-aliased.
        let phase = ((x * 37 + top * 17) % 10) as f64 / 10.0;
        let r = font::rasterize_at(text, spec, px, ink, phase).ok()?;
        if x + r.width > self.width || top + r.height > self.height {
            return None;
        }
        for dy in 0..r.height {
            for dx in 0..r.width {
                let a = r.alpha[(dy * r.width + dx) as usize] as f64;
                if a <= 0.0 {
                    continue;
                }
                let i = (((top + dy) * self.width + x + dx) * 3) as usize;
                for c in 0..3 {
                    self.rgb[i + c] = self.rgb[i + c] * (1.0 - a) + ink[c] as f64 * a;
                }
            }
        }
        Some(Region::new(x, top, r.width, r.height))
    }

    fn text_width(text: &str, spec: &FontSpec, px: u32) -> u32 {
        font::rasterize(text, spec, px, [0; 3]).map(|r| r.width).unwrap_or(0)
    }

    fn dashed_line(&mut self, y: u32, x0: u32, x1: u32, ink: [u8; 3]) {
        for x in x0..x1 {
            if (x / 3) % 2 == 0 {
                let i = ((y * self.width + x) * 3) as usize;
                for c in 0..3 {
                    self.rgb[i + c] = ink[c] as f64;
                }
            }
        }
    }
}

fn price_text<R: Rng>(rng: &mut R) -> String {
    let v: u32 = rng.gen_range(80..3000) / 10 * 10;
    if v >= 1000 {
        format!("¥{},{:03}", v / 1000, v % 1000)
    } else {
        format!("¥{v}")
    }
}

/// Renders a receipt page and its word-level annotation for `seed`.
pub fn synth_receipt(document_id: &str, seed: u64) -> (DocumentImage, OcrAnnotation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(36..=48) * 8;
    let n_items = rng.gen_range(4..=9);
    let body_px: u32 = rng.gen_range(10..=13);
    let line_h = body_px + rng.gen_range(8..=12);
    let margin = rng.gen_range(16..=28);
    let height = (margin * 2 + 40 + line_h * (n_items as u32 + 6)).max(160);

    let paper: [f64; 3] = [
        rng.gen_range(244..=252) as f64,
        rng.gen_range(242..=250) as f64,
        rng.gen_range(236..=246) as f64,
    ];
    let mut rgb = Vec::with_capacity((width * height * 3) as usize);
    for _ in 0..width * height {
        let g = rng.gen_range(-3i32..=3) as f64;
        for c in paper {
            rgb.push(c + g);
        }
    }
    let mut page = Page { width, height, rgb };
    let ink_level = rng.gen_range(20..=60);
    let ink = [ink_level, ink_level, (ink_level + rng.gen_range(0..=25))];
    let mono = FontSpec::new("mono5x7");
    let compact = FontSpec::new("compact3x5");

    let mut words: Vec<WordBox> = Vec::new();
    let push = |rect: Option<Region>, text: &str, tag: &str, words: &mut Vec<WordBox>| {
        if let Some(r) = rect {
            let x = r.x.saturating_sub(WORD_PAD);
            let y = r.y.saturating_sub(WORD_PAD);
            let w = (r.right() + WORD_PAD).min(width) - x;
            let h = (r.bottom() + WORD_PAD).min(height) - y;
            words.push(WordBox { rect: Region::new(x, y, w, h), text: text.to_string(), tag: Some(tag.to_string()) });
        }
    };

    // Writes space-separated words starting at x, returning the end x.
    let line = |page: &mut Page, words: &mut Vec<WordBox>, text: &str, spec: &FontSpec, px: u32, x: u32, top: u32, tag: &str| {
        let space = (px as f64 * 0.6).round() as u32;
        let mut pen = x;
        for w in text.split_whitespace() {
            let rect = page.draw_text(w, spec, px, ink, pen, top);
            if let Some(r) = rect {
                pen = r.right() + space;
            }
            push(rect, w, tag, words);
        }
        pen
    };

    let mut y = margin;
    let store = *STORES.choose(&mut rng).unwrap();
    let store_px = body_px + 3;
    let sw = Page::text_width(store, &mono, store_px) + store.split_whitespace().count() as u32 * 2;
    line(&mut page, &mut words, store, &mono, store_px, (width.saturating_sub(sw)) / 2, y, "store");
    y += store_px + line_h;

    let date = format!(
        "2024/{:02}/{:02} {:02}:{:02}",
        rng.gen_range(1..=12),
        rng.gen_range(1..=28),
        rng.gen_range(8..=21),
        rng.gen_range(0..60)
    );
    line(&mut page, &mut words, &date, &compact, body_px - 2, margin, y, "date");
    y += line_h;
    page.dashed_line(y, margin, width - margin, ink);
    y += line_h / 2 + 2;

    let mut names: Vec<&str> = ITEMS.to_vec();
    names.shuffle(&mut rng);
    for name in names.iter().take(n_items) {
        line(&mut page, &mut words, name, &mono, body_px, margin, y, "item");
        let price = price_text(&mut rng);
        let pw = Page::text_width(&price, &mono, body_px);
        line(&mut page, &mut words, &price, &mono, body_px, width - margin - pw, y, "price");
        y += line_h;
    }
    page.dashed_line(y, margin, width - margin, ink);
    y += line_h / 2 + 2;

    line(&mut page, &mut words, "TOTAL", &mono, body_px + 1, margin, y, "label");
    let total = price_text(&mut rng);
    let tw = Page::text_width(&total, &mono, body_px + 1);
    line(&mut page, &mut words, &total, &mono, body_px + 1, width - margin - tw, y, "total");
    y += line_h + line_h / 2;
    let thanks = "THANK YOU";
    let thw = Page::text_width(thanks, &mono, body_px - 1) + 6;
    line(&mut page, &mut words, thanks, &mono, body_px - 1, (width - thw) / 2, y, "footer");

    let buf: Vec<u8> = page.rgb.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let image = DocumentImage::from_raw(document_id, width, height, buf).expect("receipt page dimensions");
    let annot = OcrAnnotation {
        document_id: document_id.to_string(),
        image_width: width,
        image_height: height,
        image: None,
        words,
    };
    (image, annot)
}

/// `n` receipts with ids `receipt_0000`... and seeds derived from `seed`.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<(DocumentImage, OcrAnnotation)> {
    (0..n)
        .map(|i| synth_receipt(&format!("receipt_{i:04}"), seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receipts_are_deterministic_and_annotated() {
        let (a, aa) = synth_receipt("r", 11);
        let (b, bb) = synth_receipt("r", 11);
        assert_eq!(a, b);
        assert_eq!(aa, bb);
        assert!(aa.words_tagged("price").count() >= 4);
        for w in &aa.words {
            assert!(w.rect.fits_in(a.width(), a.height()));
        }
    }

    #[test]
    fn annotation_round_trips_through_json() {
        let (_, a) = synth_receipt("r", 5);
        let back = OcrAnnotation::parse_str(&a.to_json(), "mem").unwrap();
        assert_eq!(back, a);
    }
}
