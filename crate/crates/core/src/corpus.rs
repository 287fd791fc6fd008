//! Document corpus: OCR annotation files, blank-area search and target
//! selection.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{DocumentImage, RasterError, Region};

/// Maximum per-channel standard deviation (in intensity levels) of a blank window.
pub const BLANK_STD_MAX: u64 = 8;
/// Grid step of the blank-window scan.
pub const BLANK_STRIDE: u32 = 8;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed annotation {path}: {msg}")]
    MalformedAnnotation { path: String, msg: String },
    #[error("word {index} ({rect}) lies outside the {width}x{height} image")]
    OutOfBoundsBox { index: usize, rect: Region, width: u32, height: u32 },
    #[error("annotation {path} does not reference an image")]
    MissingImageRef { path: String },
    #[error("image for {document_id} not found at {path}")]
    MissingImage { document_id: String, path: String },
    #[error("image {document_id} is {actual_w}x{actual_h} but annotation declares {declared_w}x{declared_h}")]
    ImageSizeMismatch {
        document_id: String,
        declared_w: u32,
        declared_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("no word box matches the target policy")]
    NoMatchingTarget,
    #[error("corpus i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordBox {
    pub rect: Region,
    pub text: String,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrAnnotation {
    pub document_id: String,
    pub image_width: u32,
    pub image_height: u32,
    /// Image file name, relative to the annotation file.
    pub image: Option<String>,
    pub words: Vec<WordBox>,
}

/// On-disk annotation layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationFile {
    document_id: String,
    image_width: u32,
    image_height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    words: Vec<WordEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WordEntry {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

impl OcrAnnotation {
    pub fn parse_str(src: &str, origin: &str) -> Result<Self, CorpusError> {
        let file: AnnotationFile = serde_json::from_str(src).map_err(|e| CorpusError::MalformedAnnotation {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        if file.document_id.trim().is_empty() {
            return Err(CorpusError::MissingImageRef { path: origin.to_string() });
        }
        let (width, height) = (file.image_width, file.image_height);
        let mut words = Vec::with_capacity(file.words.len());
        for (index, w) in file.words.into_iter().enumerate() {
            let rect = Region::new(w.x, w.y, w.w, w.h);
            if !rect.fits_in(width, height) {
                return Err(CorpusError::OutOfBoundsBox { index, rect, width, height });
            }
            if w.text.is_empty() {
                return Err(CorpusError::MalformedAnnotation {
                    path: origin.to_string(),
                    msg: format!("word {index} has empty text"),
                });
            }
            words.push(WordBox { rect, text: w.text, tag: w.tag });
        }
        Ok(OcrAnnotation {
            document_id: file.document_id,
            image_width: width,
            image_height: height,
            image: file.image,
            words,
        })
    }

    pub fn to_json(&self) -> String {
        let file = AnnotationFile {
            document_id: self.document_id.clone(),
            image_width: self.image_width,
            image_height: self.image_height,
            image: self.image.clone(),
            words: self
                .words
                .iter()
                .map(|w| WordEntry {
                    x: w.rect.x,
                    y: w.rect.y,
                    w: w.rect.w,
                    h: w.rect.h,
                    text: w.text.clone(),
                    tag: w.tag.clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("annotation serializes");
        s.push('\n');
        s
    }

    pub fn words_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a WordBox> + 'a {
        self.words.iter().filter(move |w| w.tag.as_deref() == Some(tag))
    }
}

/// Reads and validates one annotation file.
pub fn parse_annotations(path: &Path) -> Result<OcrAnnotation, CorpusError> {
    let src = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    OcrAnnotation::parse_str(&src, &path.display().to_string())
}

/// Loads `<dir>/*.json` annotations with their images, sorted by document id.
pub fn load_corpus(dir: &Path) -> Result<Vec<(DocumentImage, OcrAnnotation)>, CorpusError> {
    let io = |source| CorpusError::Io { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let annot = parse_annotations(&p)?;
        let img_name = annot.image.clone().unwrap_or_else(|| format!("{}.png", annot.document_id));
        let img_path = p.parent().unwrap_or(dir).join(&img_name);
        if !img_path.exists() {
            return Err(CorpusError::MissingImage {
                document_id: annot.document_id.clone(),
                path: img_path.display().to_string(),
            });
        }
        let image = DocumentImage::load(annot.document_id.clone(), &img_path)?;
        if image.width() != annot.image_width || image.height() != annot.image_height {
            return Err(CorpusError::ImageSizeMismatch {
                document_id: annot.document_id.clone(),
                declared_w: annot.image_width,
                declared_h: annot.image_height,
                actual_w: image.width(),
                actual_h: image.height(),
            });
        }
        out.push((image, annot));
    }
    out.sort_by(|a, b| a.1.document_id.cmp(&b.1.document_id));
    Ok(out)
}

/// Writes one document as `<id>.png` plus `<id>.json`.
pub fn save_document(dir: &Path, image: &DocumentImage, annot: &OcrAnnotation) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|source| CorpusError::Io { path: dir.display().to_string(), source })?;
    let img_name = format!("{}.png", annot.document_id);
    image.save_png(&dir.join(&img_name))?;
    let mut a = annot.clone();
    a.image = Some(img_name);
    let json_path = dir.join(format!("{}.json", annot.document_id));
    fs::write(&json_path, a.to_json()).map_err(|source| CorpusError::Io {
        path: json_path.display().to_string(),
        source,
    })
}

/// Per-channel prefix sums of values and squared values.
pub(crate) struct IntegralImage {
    stride: usize,
    sum: Vec<[u64; 3]>,
    sq: Vec<[u64; 3]>,
}

impl IntegralImage {
    pub(crate) fn new(image: &DocumentImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let stride = w + 1;
        let mut sum = vec![[0u64; 3]; stride * (h + 1)];
        let mut sq = vec![[0u64; 3]; stride * (h + 1)];
        let raw = image.as_raw();
        for y in 0..h {
            let mut row_s = [0u64; 3];
            let mut row_q = [0u64; 3];
            for x in 0..w {
                let p = &raw[(y * w + x) * 3..(y * w + x) * 3 + 3];
                let i = (y + 1) * stride + x + 1;
                for c in 0..3 {
                    row_s[c] += p[c] as u64;
                    row_q[c] += (p[c] as u64) * (p[c] as u64);
                    sum[i][c] = sum[i - stride][c] + row_s[c];
                    sq[i][c] = sq[i - stride][c] + row_q[c];
                }
            }
        }
        IntegralImage { stride, sum, sq }
    }

    fn rect(table: &[[u64; 3]], stride: usize, r: Region, c: usize) -> u64 {
        let (x0, y0, x1, y1) = (r.x as usize, r.y as usize, r.right() as usize, r.bottom() as usize);
        table[y1 * stride + x1][c] + table[y0 * stride + x0][c] - table[y0 * stride + x1][c] - table[y1 * stride + x0][c]
    }

    /// Every channel has population std < `BLANK_STD_MAX`, tested exactly
    /// as `n * sum(v^2) - sum(v)^2 < max^2 * n^2`.
    pub(crate) fn is_flat(&self, r: Region) -> bool {
        let n = r.area() as u128;
        (0..3).all(|c| {
            let s = Self::rect(&self.sum, self.stride, r, c) as u128;
            let q = Self::rect(&self.sq, self.stride, r, c) as u128;
            n * q - s * s < (BLANK_STD_MAX as u128 * BLANK_STD_MAX as u128) * n * n
        })
    }
}

/// Blank windows of exactly `min_w` x `min_h` on a stride-8 grid, kept
/// greedily in scan order so that no two overlap, then ordered by area
/// (descending) with ties in row-major order. A window is blank when it
/// overlaps no word box and every channel is flat.
pub fn find_blank_regions(image: &DocumentImage, annot: &OcrAnnotation, min_w: u32, min_h: u32) -> Vec<Region> {
    let integral = IntegralImage::new(image);
    blank_regions_with(&integral, image.width(), image.height(), annot, min_w, min_h)
}

pub(crate) fn blank_regions_with(
    integral: &IntegralImage,
    width: u32,
    height: u32,
    annot: &OcrAnnotation,
    min_w: u32,
    min_h: u32,
) -> Vec<Region> {
    let (min_w, min_h) = (min_w.max(4), min_h.max(4));
    if min_w > width || min_h > height {
        return Vec::new();
    }
    let mut kept: Vec<Region> = Vec::new();
    for y in (0..=height - min_h).step_by(BLANK_STRIDE as usize) {
        for x in (0..=width - min_w).step_by(BLANK_STRIDE as usize) {
            let cand = Region::new(x, y, min_w, min_h);
            if annot.words.iter().any(|w| w.rect.intersects(&cand)) {
                continue;
            }
            if kept.iter().any(|k| k.intersects(&cand)) {
                continue;
            }
            if integral.is_flat(cand) {
                kept.push(cand);
            }
        }
    }
    kept.sort_by(|a, b| b.area().cmp(&a.area()).then((a.y, a.x).cmp(&(b.y, b.x))));
    kept
}

/// How editing targets are chosen from the OCR result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tag", rename_all = "snake_case")]
pub enum TargetPolicy {
    /// A word carrying this semantic tag.
    TaggedWord(String),
    /// Any recognized word.
    AnyWord,
    /// Blank margin beside a word carrying this tag.
    AdjacentMargin(String),
}

impl Default for TargetPolicy {
    fn default() -> Self {
        TargetPolicy::TaggedWord("price".into())
    }
}

impl TargetPolicy {
    /// Word boxes eligible under this policy, in annotation order.
    pub fn matching_words<'a>(&self, annot: &'a OcrAnnotation) -> Vec<&'a WordBox> {
        match self {
            TargetPolicy::AnyWord => annot.words.iter().collect(),
            TargetPolicy::TaggedWord(t) | TargetPolicy::AdjacentMargin(t) => {
                annot.words.iter().filter(|w| w.tag.as_deref() == Some(t.as_str())).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Word(WordBox),
    Margin { region: Region, anchor: WordBox },
}

/// Picks an editing target. Word policies draw uniformly among matches;
/// margin policy returns a word-sized blank region beside a matching word.
pub fn select_target<R: Rng + ?Sized>(
    image: &DocumentImage,
    annot: &OcrAnnotation,
    policy: &TargetPolicy,
    rng: &mut R,
) -> Result<Target, CorpusError> {
    let matches = policy.matching_words(annot);
    if matches.is_empty() {
        return Err(CorpusError::NoMatchingTarget);
    }
    match policy {
        TargetPolicy::TaggedWord(_) | TargetPolicy::AnyWord => {
            let w = matches[rng.gen_range(0..matches.len())];
            Ok(Target::Word(w.clone()))
        }
        TargetPolicy::AdjacentMargin(_) => {
            let integral = IntegralImage::new(image);
            let mut order: Vec<&WordBox> = matches;
            order.shuffle(rng);
            for w in order {
                if let Some(region) = adjacent_margin_with(&integral, image, annot, w, w.rect.w, w.rect.h) {
                    return Ok(Target::Margin { region, anchor: w.clone() });
                }
            }
            Err(CorpusError::NoMatchingTarget)
        }
    }
}

/// Blank `w` x `h` region level with `anchor`, separated from it by a gap
/// of at most twice the anchor's height. The right side is tried first,
/// nearest gap first.
pub fn adjacent_margin(image: &DocumentImage, annot: &OcrAnnotation, anchor: &WordBox, w: u32, h: u32) -> Option<Region> {
    adjacent_margin_with(&IntegralImage::new(image), image, annot, anchor, w, h)
}

pub(crate) fn adjacent_margin_with(
    integral: &IntegralImage,
    image: &DocumentImage,
    annot: &OcrAnnotation,
    anchor: &WordBox,
    w: u32,
    h: u32,
) -> Option<Region> {
    let max_gap = 2 * anchor.rect.h;
    let y = anchor.rect.y;
    if w == 0 || h == 0 || y + h > image.height() {
        return None;
    }
    let ok = |r: Region| {
        r.fits_in(image.width(), image.height())
            && !annot.words.iter().any(|wb| wb.rect.intersects(&r))
            && integral.is_flat(r)
    };
    for gap in 0..=max_gap {
        let right = Region::new(anchor.rect.right() + gap, y, w, h);
        if ok(right) {
            return Some(right);
        }
    }
    for gap in 0..=max_gap {
        if let Some(x) = anchor.rect.x.checked_sub(gap + w) {
            let left = Region::new(x, y, w, h);
            if ok(left) {
                return Some(left);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn annot(words: Vec<WordBox>, w: u32, h: u32) -> OcrAnnotation {
        OcrAnnotation { document_id: "doc".into(), image_width: w, image_height: h, image: None, words }
    }

    fn word(x: u32, y: u32, w: u32, h: u32, text: &str, tag: Option<&str>) -> WordBox {
        WordBox { rect: Region::new(x, y, w, h), text: text.into(), tag: tag.map(Into::into) }
    }

    #[test]
    fn parse_empty_words() {
        let a = OcrAnnotation::parse_str(
            r#"{"document_id":"r1","image_width":200,"image_height":300,"words":[]}"#,
            "mem",
        )
        .unwrap();
        assert!(a.words.is_empty());
    }

    #[test]
    fn parse_preserves_tag() {
        let a = OcrAnnotation::parse_str(
            r#"{"document_id":"r1","image_width":200,"image_height":300,
                "words":[{"x":10,"y":10,"w":40,"h":12,"text":"¥980","tag":"price"}]}"#,
            "mem",
        )
        .unwrap();
        assert_eq!(a.words, vec![word(10, 10, 40, 12, "¥980", Some("price"))]);
    }

    #[test]
    fn parse_rejects_out_of_bounds_box() {
        let e = OcrAnnotation::parse_str(
            r#"{"document_id":"r1","image_width":200,"image_height":300,
                "words":[{"x":190,"y":290,"w":40,"h":12,"text":"x"}]}"#,
            "mem",
        )
        .unwrap_err();
        assert!(matches!(e, CorpusError::OutOfBoundsBox { index: 0, .. }));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            OcrAnnotation::parse_str("{not json", "mem"),
            Err(CorpusError::MalformedAnnotation { .. })
        ));
        assert!(matches!(
            OcrAnnotation::parse_str(r#"{"document_id":"","image_width":200,"image_height":300,"words":[]}"#, "mem"),
            Err(CorpusError::MissingImageRef { .. })
        ));
        assert!(matches!(
            OcrAnnotation::parse_str(
                r#"{"document_id":"a","image_width":200,"image_height":300,"words":[{"x":1,"y":1,"w":2,"h":2,"text":""}]}"#,
                "mem"
            ),
            Err(CorpusError::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn blank_regions_avoid_words() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let a = annot(vec![word(0, 0, 100, 200, "x", None)], 200, 200);
        let regions = find_blank_regions(&img, &a, 16, 16);
        assert!(!regions.is_empty());
        assert!(regions.iter().all(|r| r.x >= 100));
    }

    #[test]
    fn fully_covered_image_has_no_blank_region() {
        let img = DocumentImage::filled("d", 128, 128, [255; 3]).unwrap();
        let a = annot(vec![word(0, 0, 128, 128, "x", None)], 128, 128);
        assert!(find_blank_regions(&img, &a, 8, 8).is_empty());
    }

    #[test]
    fn textured_window_is_not_blank() {
        let mut img = DocumentImage::filled("d", 64, 64, [255; 3]).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                if (x / 2 + y / 2) % 2 == 0 {
                    img.set_pixel(x, y, [0; 3]);
                }
            }
        }
        assert!(find_blank_regions(&img, &annot(vec![], 64, 64), 8, 8).is_empty());
    }

    #[test]
    fn select_singleton_tagged_word() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let p = word(100, 20, 30, 12, "980", Some("price"));
        let a = annot(vec![word(10, 20, 40, 12, "milk", Some("item")), p.clone()], 200, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = select_target(&img, &a, &TargetPolicy::TaggedWord("price".into()), &mut rng).unwrap();
        assert_eq!(t, Target::Word(p));
    }

    #[test]
    fn select_from_empty_annotation_fails() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            select_target(&img, &annot(vec![], 200, 200), &TargetPolicy::AnyWord, &mut rng),
            Err(CorpusError::NoMatchingTarget)
        ));
    }

    #[test]
    fn selection_is_seed_deterministic() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let a = annot(
            vec![word(100, 20, 30, 12, "980", Some("price")), word(100, 60, 30, 12, "120", Some("price"))],
            200,
            200,
        );
        let policy = TargetPolicy::TaggedWord("price".into());
        for seed in 0..20 {
            let t1 = select_target(&img, &a, &policy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let t2 = select_target(&img, &a, &policy, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn adjacent_margin_prefers_right_side() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let p = word(80, 20, 30, 12, "980", Some("price"));
        let a = annot(vec![p.clone()], 200, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match select_target(&img, &a, &TargetPolicy::AdjacentMargin("price".into()), &mut rng).unwrap() {
            Target::Margin { region, anchor } => {
                assert_eq!(anchor, p);
                assert_eq!(region, Region::new(110, 20, 30, 12));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adjacent_margin_falls_back_to_left() {
        let img = DocumentImage::filled("d", 200, 200, [255; 3]).unwrap();
        let p = word(160, 20, 30, 12, "980", Some("price"));
        let a = annot(vec![p.clone()], 200, 200);
        let r = adjacent_margin(&img, &a, &p, 30, 12).unwrap();
        assert_eq!(r, Region::new(130, 20, 30, 12));
    }
}
