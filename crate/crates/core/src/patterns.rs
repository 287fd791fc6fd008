//! The four editing patterns (text removal, text replacement, text addition,
//! background addition) realized with copy-move and generative methods.
//!
//! Every `apply_*` returns the forged page, its ground-truth mask and an
//! [`EditRecord`]. The mask is the set of pixels whose bytes differ from the
//! original page, so the forged page differs from the original exactly on it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, IntegralImage, OcrAnnotation, TargetPolicy, WordBox};
use crate::edit::{self, BinaryMaskRegion, EditError, InpaintParams, StringImage};
use crate::font::{self};
use crate::raster::{DocumentImage, ForgeryMask, Mask, Region};

/// Background additions must change at least this many pixels.
pub const MIN_BACKGROUND_CHANGE: u64 = 16;
/// Emitted masks must cover less than this fraction of the page.
pub const MAX_FORGED_FRACTION: f64 = 0.5;
/// Largest relative size difference between a donor word and the target.
pub const DONOR_SCALE_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditPattern {
    TextRemoval,
    TextReplacement,
    BackgroundAddition,
    TextAddition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodFamily {
    CopyMove,
    Mix,
    Generative,
}

impl EditPattern {
    pub const ALL: [EditPattern; 4] = [
        EditPattern::TextRemoval,
        EditPattern::TextReplacement,
        EditPattern::BackgroundAddition,
        EditPattern::TextAddition,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            EditPattern::TextRemoval => "text_removal",
            EditPattern::TextReplacement => "text_replacement",
            EditPattern::BackgroundAddition => "background_addition",
            EditPattern::TextAddition => "text_addition",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EditPattern::TextRemoval => "Text removal",
            EditPattern::TextReplacement => "Text replacement",
            EditPattern::BackgroundAddition => "Background addition",
            EditPattern::TextAddition => "Text addition",
        }
    }
}

impl MethodFamily {
    pub const ALL: [MethodFamily; 3] = [MethodFamily::CopyMove, MethodFamily::Mix, MethodFamily::Generative];

    pub fn slug(self) -> &'static str {
        match self {
            MethodFamily::CopyMove => "copy_move",
            MethodFamily::Mix => "mix",
            MethodFamily::Generative => "generative",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MethodFamily::CopyMove => "Copy-move",
            MethodFamily::Mix => "Mix",
            MethodFamily::Generative => "Generative",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{pattern:?} cannot be realized with {method:?}")]
pub struct InvalidCase {
    pub pattern: EditPattern,
    pub method: MethodFamily,
}

/// One of the nine pattern/method combinations. Mix only pairs with text
/// replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawCase", into = "RawCase")]
pub struct CaseKey {
    pattern: EditPattern,
    method: MethodFamily,
}

#[derive(Serialize, Deserialize)]
struct RawCase {
    pattern: EditPattern,
    method: MethodFamily,
}

impl TryFrom<RawCase> for CaseKey {
    type Error = InvalidCase;
    fn try_from(r: RawCase) -> Result<Self, InvalidCase> {
        CaseKey::new(r.pattern, r.method)
    }
}

impl From<CaseKey> for RawCase {
    fn from(c: CaseKey) -> Self {
        RawCase { pattern: c.pattern, method: c.method }
    }
}

impl CaseKey {
    /// All nine cases in table order.
    pub const ALL: [CaseKey; 9] = [
        CaseKey { pattern: EditPattern::TextRemoval, method: MethodFamily::CopyMove },
        CaseKey { pattern: EditPattern::TextRemoval, method: MethodFamily::Generative },
        CaseKey { pattern: EditPattern::TextReplacement, method: MethodFamily::CopyMove },
        CaseKey { pattern: EditPattern::TextReplacement, method: MethodFamily::Mix },
        CaseKey { pattern: EditPattern::TextReplacement, method: MethodFamily::Generative },
        CaseKey { pattern: EditPattern::BackgroundAddition, method: MethodFamily::CopyMove },
        CaseKey { pattern: EditPattern::BackgroundAddition, method: MethodFamily::Generative },
        CaseKey { pattern: EditPattern::TextAddition, method: MethodFamily::CopyMove },
        CaseKey { pattern: EditPattern::TextAddition, method: MethodFamily::Generative },
    ];

    pub fn new(pattern: EditPattern, method: MethodFamily) -> Result<Self, InvalidCase> {
        if method == MethodFamily::Mix && pattern != EditPattern::TextReplacement {
            return Err(InvalidCase { pattern, method });
        }
        Ok(CaseKey { pattern, method })
    }

    pub fn pattern(&self) -> EditPattern {
        self.pattern
    }

    pub fn method(&self) -> MethodFamily {
        self.method
    }

    /// Directory-safe name, e.g. `text_removal-copy_move`.
    pub fn slug(&self) -> String {
        format!("{}-{}", self.pattern.slug(), self.method.slug())
    }
}

impl fmt::Display for CaseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

impl FromStr for CaseKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CaseKey::ALL
            .into_iter()
            .find(|c| c.slug() == s)
            .ok_or_else(|| format!("unknown case {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    InRepo,
    ExternalBridge,
}

/// Provenance of one forgery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub case: CaseKey,
    pub source_region: Option<Region>,
    pub target_region: Region,
    pub generator: GeneratorKind,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("no blank region of {w}x{h} available")]
    NoBlankRegion { w: u32, h: u32 },
    #[error("no word box matches the target policy")]
    NoMatchingTarget,
    #[error("no donor word fits the target")]
    NoDonorWord,
    #[error("degenerate edit: {0}")]
    Degenerate(String),
    #[error("generator failed: {0}")]
    Generator(String),
    #[error(transparent)]
    InvalidCase(#[from] InvalidCase),
    #[error(transparent)]
    Edit(#[from] EditError),
}

/// Source of synthesized content for the generative family.
pub trait Generator: Send + Sync {
    fn kind(&self) -> GeneratorKind;

    /// Page with the hole filled. Pixels outside the hole may be perturbed;
    /// callers keep only the hole.
    fn inpaint(&self, image: &DocumentImage, hole: &BinaryMaskRegion) -> Result<DocumentImage, PatternError>;

    /// String image of `text` styled after the word at `style_ref`.
    fn text_image(&self, image: &DocumentImage, style_ref: Region, text: &str) -> Result<StringImage, PatternError>;
}

/// Harmonic inpainting plus bundled-font rendering.
#[derive(Debug, Clone, Default)]
pub struct InRepoGenerator {
    pub inpaint: InpaintParams,
}

impl Generator for InRepoGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::InRepo
    }

    fn inpaint(&self, image: &DocumentImage, hole: &BinaryMaskRegion) -> Result<DocumentImage, PatternError> {
        let out = edit::inpaint_diffusion(image, hole, self.inpaint)?;
        if !out.converged {
            log::debug!("inpainting stopped at residual {:.3} after {} sweeps", out.max_residual, out.iterations);
        }
        Ok(out.image)
    }

    fn text_image(&self, image: &DocumentImage, style_ref: Region, text: &str) -> Result<StringImage, PatternError> {
        let style = word_style(image, style_ref);
        let spec = font::closest_font_by_x_height(style.ink.h);
        let patch = edit::render_text(text, &spec, style.ink.h.max(5), style.color)?;
        Ok(edit::binarize_otsu(&patch)?)
    }
}

/// Ink color and inked bounding box of a word box.
struct WordStyle {
    color: [u8; 3],
    ink: Region,
}

fn word_style(image: &DocumentImage, rect: Region) -> WordStyle {
    let fallback = WordStyle { color: [40, 40, 40], ink: rect };
    let Ok(patch) = edit::copy_region(image, rect) else { return fallback };
    let Ok(s) = edit::binarize_otsu(&patch) else { return fallback };
    let m = Mask::from_raw(s.w, s.h, s.glyph_mask.clone()).expect("binary glyph mask");
    match m.bounding_rect() {
        Some(b) => WordStyle {
            color: s.fg_color,
            ink: Region::new(rect.x + b.x, rect.y + b.y, b.w, b.h),
        },
        None => fallback,
    }
}

/// Settings shared by all patterns.
pub struct PatternContext<'a> {
    pub policy: &'a TargetPolicy,
    pub generator: &'a dyn Generator,
    pub blend_radius: u32,
}

#[derive(Debug, Clone)]
pub struct ForgeryOutput {
    pub image: DocumentImage,
    pub mask: ForgeryMask,
    pub record: EditRecord,
}

/// Random digit substitution preserving length and layout; at least one
/// digit changes. Text without digits gets its letters substituted instead.
pub fn mutate_digits<R: Rng + ?Sized>(text: &str, rng: &mut R) -> String {
    let chars: Vec<char> = text.chars().collect();
    let digit_pos: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_digit()).collect();
    let mut out = chars.clone();
    if !digit_pos.is_empty() {
        for &i in &digit_pos {
            let leading = i == 0 || !chars[i - 1].is_ascii_digit();
            let lo = if leading && chars[i] != '0' { 1 } else { 0 };
            out[i] = char::from(b'0' + rng.gen_range(lo..=9u8));
        }
        if out == chars {
            let i = digit_pos[rng.gen_range(0..digit_pos.len())];
            let d = chars[i] as u8 - b'0';
            let leading = i == 0 || !chars[i - 1].is_ascii_digit();
            let mut nd = (d + rng.gen_range(1..=9u8)) % 10;
            if leading && d != 0 && nd == 0 {
                nd = if d == 1 { 2 } else { 1 };
            }
            out[i] = char::from(b'0' + nd);
        }
    } else {
        let letter_pos: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_alphabetic()).collect();
        if letter_pos.is_empty() {
            return format!("{}", rng.gen_range(100..1000u32));
        }
        for &i in &letter_pos {
            let base = if chars[i].is_ascii_uppercase() { b'A' } else { b'a' };
            out[i] = char::from(base + rng.gen_range(0..26u8));
        }
        if out == chars {
            let i = letter_pos[0];
            let base = if chars[i].is_ascii_uppercase() { b'A' } else { b'a' };
            out[i] = char::from(base + (chars[i] as u8 - base + 1) % 26);
        }
    }
    out.into_iter().collect()
}

fn pick_word<R: Rng + ?Sized>(annot: &OcrAnnotation, policy: &TargetPolicy, rng: &mut R) -> Result<WordBox, PatternError> {
    let matches = policy.matching_words(annot);
    if matches.is_empty() {
        return Err(PatternError::NoMatchingTarget);
    }
    Ok(matches[rng.gen_range(0..matches.len())].clone())
}

/// Blank `w` x `h` region: beside a policy-tagged word when possible,
/// otherwise anywhere blank. The `&'static str` reports which.
fn blank_target<R: Rng + ?Sized>(
    integral: &IntegralImage,
    image: &DocumentImage,
    annot: &OcrAnnotation,
    policy: &TargetPolicy,
    w: u32,
    h: u32,
    rng: &mut R,
) -> Result<(Region, &'static str), PatternError> {
    if let TargetPolicy::TaggedWord(_) | TargetPolicy::AdjacentMargin(_) = policy {
        let mut anchors = policy.matching_words(annot);
        anchors.shuffle(rng);
        for a in anchors {
            if let Some(r) = corpus::adjacent_margin_with(integral, image, annot, a, w, h) {
                return Ok((r, "margin"));
            }
        }
    }
    let blanks = corpus::blank_regions_with(integral, image.width(), image.height(), annot, w, h);
    if blanks.is_empty() {
        return Err(PatternError::NoBlankRegion { w, h });
    }
    let b = blanks[rng.gen_range(0..blanks.len())];
    Ok((Region::new(b.x, b.y, w, h), "blank"))
}

/// Donor word for copy-move replacement: size within the tolerance of the
/// target, preferring different text, drawn uniformly from the candidates
/// ordered nearest-size first.
fn pick_donor<R: Rng + ?Sized>(annot: &OcrAnnotation, target: &WordBox, rng: &mut R) -> Result<WordBox, PatternError> {
    let fits = |d: &WordBox| {
        let dw = (d.rect.w as f64 - target.rect.w as f64).abs();
        let dh = (d.rect.h as f64 - target.rect.h as f64).abs();
        d.rect != target.rect
            && dw <= DONOR_SCALE_TOLERANCE * target.rect.w as f64
            && dh <= DONOR_SCALE_TOLERANCE * target.rect.h as f64
    };
    let mut cands: Vec<&WordBox> = annot.words.iter().filter(|d| fits(d)).collect();
    if cands.iter().any(|d| d.text != target.text) {
        cands.retain(|d| d.text != target.text);
    }
    if target.tag.is_some() && cands.iter().any(|d| d.tag == target.tag) {
        cands.retain(|d| d.tag == target.tag);
    }
    if cands.is_empty() {
        return Err(PatternError::NoDonorWord);
    }
    let dist = |d: &WordBox| d.rect.w.abs_diff(target.rect.w) + d.rect.h.abs_diff(target.rect.h);
    cands.sort_by_key(|d| dist(d));
    Ok(cands[rng.gen_range(0..cands.len())].clone())
}

/// Places an `w` x `h` box at (`x`, `y`), shifted back inside the page when needed.
fn clamp_origin(image: &DocumentImage, x: u32, y: u32, w: u32, h: u32) -> Result<(u32, u32), PatternError> {
    if w > image.width() || h > image.height() {
        return Err(PatternError::Degenerate(format!("{w}x{h} string image larger than page")));
    }
    Ok((x.min(image.width() - w), y.min(image.height() - h)))
}

/// Generator inpainting with everything outside the hole restored.
fn inpaint_composite(generator: &dyn Generator, image: &DocumentImage, hole: &BinaryMaskRegion) -> Result<DocumentImage, PatternError> {
    let filled = generator.inpaint(image, hole)?;
    if filled.width() != image.width() || filled.height() != image.height() {
        return Err(PatternError::Generator("inpainted image has wrong dimensions".into()));
    }
    let mut out = image.clone();
    let r = hole.region;
    for dy in 0..r.h {
        for dx in 0..r.w {
            if hole.mask[(dy * r.w + dx) as usize] != 0 {
                out.set_pixel(r.x + dx, r.y + dy, filled.pixel(r.x + dx, r.y + dy));
            }
        }
    }
    Ok(out)
}

fn finish(
    original: &DocumentImage,
    forged: DocumentImage,
    record: EditRecord,
    min_changed: u64,
) -> Result<ForgeryOutput, PatternError> {
    let mask = forged.diff_mask(original).expect("same page dimensions");
    let changed = mask.count();
    if changed < min_changed.max(1) {
        return Err(PatternError::Degenerate(format!("only {changed} pixels changed")));
    }
    if mask.fraction() >= MAX_FORGED_FRACTION {
        return Err(PatternError::Degenerate(format!("forged fraction {:.3} too large", mask.fraction())));
    }
    Ok(ForgeryOutput { image: forged, mask, record })
}

fn record(case: CaseKey, ctx: &PatternContext<'_>, source: Option<Region>, target: Region, seed: u64) -> EditRecord {
    let generator = if case.method() == MethodFamily::CopyMove {
        GeneratorKind::InRepo
    } else {
        ctx.generator.kind()
    };
    EditRecord { case, source_region: source, target_region: target, generator, seed, params: BTreeMap::new() }
}

fn case(pattern: EditPattern, family: MethodFamily) -> Result<CaseKey, PatternError> {
    Ok(CaseKey::new(pattern, family)?)
}

pub fn apply_text_removal<R: Rng + ?Sized>(
    image: &DocumentImage,
    annot: &OcrAnnotation,
    family: MethodFamily,
    ctx: &PatternContext<'_>,
    seed: u64,
    rng: &mut R,
) -> Result<ForgeryOutput, PatternError> {
    let case = case(EditPattern::TextRemoval, family)?;
    let target = pick_word(annot, ctx.policy, rng)?;
    let t = target.rect;
    let (forged, mut rec) = match family {
        MethodFamily::CopyMove => {
            let integral = IntegralImage::new(image);
            let blanks = corpus::blank_regions_with(&integral, image.width(), image.height(), annot, t.w, t.h);
            if blanks.is_empty() {
                return Err(PatternError::NoBlankRegion { w: t.w, h: t.h });
            }
            let b = blanks[rng.gen_range(0..blanks.len())];
            let source = Region::new(b.x, b.y, t.w, t.h);
            let patch = edit::copy_region(image, source)?;
            let (out, _) = edit::paste_patch(image, &patch, t, ctx.blend_radius)?;
            let mut rec = record(case, ctx, Some(source), t, seed);
            rec.params.insert("blend_radius".into(), ctx.blend_radius.to_string());
            (out, rec)
        }
        _ => {
            let out = inpaint_composite(ctx.generator, image, &BinaryMaskRegion::full(t))?;
            (out, record(case, ctx, None, t, seed))
        }
    };
    rec.params.insert("target_text".into(), target.text.clone());
    let out = finish(image, forged, rec, 1)?;
    if out.mask.count_in(t) == 0 {
        return Err(PatternError::Degenerate("removal left the target word untouched".into()));
    }
    Ok(out)
}

pub fn apply_text_replacement<R: Rng + ?Sized>(
    image: &DocumentImage,
    annot: &OcrAnnotation,
    family: MethodFamily,
    ctx: &PatternContext<'_>,
    seed: u64,
    rng: &mut R,
) -> Result<ForgeryOutput, PatternError> {
    let case = case(EditPattern::TextReplacement, family)?;
    let target = pick_word(annot, ctx.policy, rng)?;
    let t = target.rect;
    let (forged, mut rec) = match family {
        MethodFamily::CopyMove => {
            let donor = pick_donor(annot, &target, rng)?;
            let (sx, sy) = clamp_origin(image, donor.rect.x, donor.rect.y, t.w, t.h)?;
            let source = Region::new(sx, sy, t.w, t.h);
            let patch = edit::copy_region(image, source)?;
            let (out, _) = edit::paste_patch(image, &patch, t, ctx.blend_radius)?;
            let mut rec = record(case, ctx, Some(source), t, seed);
            rec.params.insert("donor_text".into(), donor.text.clone());
            rec.params.insert("blend_radius".into(), ctx.blend_radius.to_string());
            (out, rec)
        }
        MethodFamily::Mix => {
            let donor = pick_donor(annot, &target, rng)?;
            let blanked = inpaint_composite(ctx.generator, image, &BinaryMaskRegion::full(t))?;
            let s = edit::binarize_otsu(&edit::copy_region(image, donor.rect)?)?;
            let (x, y) = clamp_origin(image, t.x, t.y, s.w, s.h)?;
            let (out, _) = edit::paste_string_image(&blanked, &s, x, y)?;
            let mut rec = record(case, ctx, Some(donor.rect), t, seed);
            rec.params.insert("donor_text".into(), donor.text.clone());
            rec.params.insert("string_origin".into(), format!("{x},{y}"));
            (out, rec)
        }
        MethodFamily::Generative => {
            let replacement = mutate_digits(&target.text, rng);
            let style = word_style(image, t);
            let blanked = inpaint_composite(ctx.generator, image, &BinaryMaskRegion::full(t))?;
            let s = ctx.generator.text_image(image, t, &replacement)?;
            let (x, y) = clamp_origin(image, style.ink.x, style.ink.y, s.w, s.h)?;
            let (out, _) = edit::paste_string_image(&blanked, &s, x, y)?;
            let mut rec = record(case, ctx, None, t, seed);
            rec.params.insert("replacement_text".into(), replacement);
            rec.params.insert("string_origin".into(), format!("{x},{y}"));
            (out, rec)
        }
    };
    rec.params.insert("target_text".into(), target.text.clone());
    let out = finish(image, forged, rec, 1)?;
    if out.mask.count_in(t) == 0 {
        return Err(PatternError::Degenerate("replacement left the target word untouched".into()));
    }
    Ok(out)
}

pub fn apply_text_addition<R: Rng + ?Sized>(
    image: &DocumentImage,
    annot: &OcrAnnotation,
    family: MethodFamily,
    ctx: &PatternContext<'_>,
    seed: u64,
    rng: &mut R,
) -> Result<ForgeryOutput, PatternError> {
    let case = case(EditPattern::TextAddition, family)?;
    let integral = IntegralImage::new(image);
    let (s, source, mut params) = match family {
        MethodFamily::CopyMove => {
            if annot.words.is_empty() {
                return Err(PatternError::NoDonorWord);
            }
            let donor = annot.words[rng.gen_range(0..annot.words.len())].clone();
            let s = edit::binarize_otsu(&edit::copy_region(image, donor.rect)?)?;
            let mut p = BTreeMap::new();
            p.insert("donor_text".to_string(), donor.text.clone());
            (s, Some(donor.rect), p)
        }
        _ => {
            let style_ref = pick_word(annot, ctx.policy, rng).or_else(|_| pick_word(annot, &TargetPolicy::AnyWord, rng))?;
            let text = mutate_digits(&style_ref.text, rng);
            let s = ctx.generator.text_image(image, style_ref.rect, &text)?;
            let mut p = BTreeMap::new();
            p.insert("added_text".to_string(), text);
            p.insert("style_ref".to_string(), style_ref.rect.to_string());
            (s, None, p)
        }
    };
    let (target, placement) = blank_target(&integral, image, annot, ctx.policy, s.w, s.h, rng)?;
    let (out, _) = edit::paste_string_image(image, &s, target.x, target.y)?;
    params.insert("placement".into(), placement.into());
    let mut rec = record(case, ctx, source, target, seed);
    rec.params = params;
    finish(image, out, rec, 1)
}

pub fn apply_background_addition<R: Rng + ?Sized>(
    image: &DocumentImage,
    annot: &OcrAnnotation,
    family: MethodFamily,
    ctx: &PatternContext<'_>,
    seed: u64,
    rng: &mut R,
) -> Result<ForgeryOutput, PatternError> {
    let case = case(EditPattern::BackgroundAddition, family)?;
    let integral = IntegralImage::new(image);
    // Background patches take the size of a text line fragment.
    let (w, h) = if annot.words.is_empty() {
        (40, 14)
    } else {
        let r = annot.words[rng.gen_range(0..annot.words.len())].rect;
        (r.w.max(4), r.h.max(4))
    };
    let (target, placement) = blank_target(&integral, image, annot, ctx.policy, w, h, rng)?;
    let (forged, rec) = match family {
        MethodFamily::CopyMove => {
            let sources: Vec<Region> = corpus::blank_regions_with(&integral, image.width(), image.height(), annot, w, h)
                .into_iter()
                .map(|b| Region::new(b.x, b.y, w, h))
                .filter(|b| !b.intersects(&target))
                .collect();
            if sources.is_empty() {
                return Err(PatternError::NoBlankRegion { w, h });
            }
            let source = sources[rng.gen_range(0..sources.len())];
            let patch = edit::copy_region(image, source)?;
            let (out, _) = edit::paste_patch(image, &patch, target, ctx.blend_radius)?;
            let mut rec = record(case, ctx, Some(source), target, seed);
            rec.params.insert("blend_radius".into(), ctx.blend_radius.to_string());
            (out, rec)
        }
        _ => {
            let out = inpaint_composite(ctx.generator, image, &BinaryMaskRegion::full(target))?;
            (out, record(case, ctx, None, target, seed))
        }
    };
    let mut rec = rec;
    rec.params.insert("placement".into(), placement.into());
    finish(image, forged, rec, MIN_BACKGROUND_CHANGE)
}

/// Dispatches to the pattern named by `case`.
pub fn apply_case<R: Rng + ?Sized>(
    case: CaseKey,
    image: &DocumentImage,
    annot: &OcrAnnotation,
    ctx: &PatternContext<'_>,
    seed: u64,
    rng: &mut R,
) -> Result<ForgeryOutput, PatternError> {
    let f = case.method();
    match case.pattern() {
        EditPattern::TextRemoval => apply_text_removal(image, annot, f, ctx, seed, rng),
        EditPattern::TextReplacement => apply_text_replacement(image, annot, f, ctx, seed, rng),
        EditPattern::TextAddition => apply_text_addition(image, annot, f, ctx, seed, rng),
        EditPattern::BackgroundAddition => apply_background_addition(image, annot, f, ctx, seed, rng),
    }
}

/// Expands a mask to the bounding rectangle of its set pixels.
pub fn bounding_rect_mask(mask: &Mask) -> Mask {
    match mask.bounding_rect() {
        Some(r) => Mask::from_region(mask.width(), mask.height(), r),
        None => mask.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exactly_nine_cases() {
        let mut n = 0;
        for p in EditPattern::ALL {
            for m in MethodFamily::ALL {
                if CaseKey::new(p, m).is_ok() {
                    n += 1;
                }
            }
        }
        assert_eq!(n, 9);
        assert!(CaseKey::new(EditPattern::TextAddition, MethodFamily::Mix).is_err());
        assert_eq!(CaseKey::ALL.len(), 9);
    }

    #[test]
    fn case_key_serde_rejects_invalid_combination() {
        let ok: CaseKey = serde_json::from_str(r#"{"pattern":"text_replacement","method":"mix"}"#).unwrap();
        assert_eq!(ok.method(), MethodFamily::Mix);
        assert!(serde_json::from_str::<CaseKey>(r#"{"pattern":"text_removal","method":"mix"}"#).is_err());
    }

    #[test]
    fn case_slug_round_trip() {
        for c in CaseKey::ALL {
            assert_eq!(c.slug().parse::<CaseKey>().unwrap(), c);
        }
    }

    #[test]
    fn digit_mutation_changes_and_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for text in ["980", "¥1,280", "0", "TOTAL", "--"] {
            for _ in 0..50 {
                let m = mutate_digits(text, &mut rng);
                assert_ne!(m, text);
                if text.chars().any(|c| c.is_ascii_alphanumeric()) {
                    assert_eq!(m.chars().count(), text.chars().count());
                }
            }
        }
        let m = mutate_digits("¥1,280", &mut rng);
        assert!(m.starts_with('¥') && m.chars().nth(2) == Some(','));
        assert_ne!(m.chars().nth(1), Some('0'));
    }
}
