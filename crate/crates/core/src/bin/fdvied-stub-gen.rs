//! Stub external generator for exercising the bridge protocol.
//!
//! Usage: `fdvied-stub-gen <mode> <request.json>` where mode is one of
//! `identity`, `wrong-size`, `mutate-outside`, `render`, `fail`, `crash`,
//! `no-response`, `wrong-id` or `sleep:<millis>`.

use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use serde_json::json;

use fdvied::edit::{self, BinaryMaskRegion, InpaintParams};
use fdvied::font::{self, FontSpec};
use fdvied::raster::{luma, DocumentImage, Mask};

#[derive(Debug, Deserialize)]
struct Request {
    request_id: String,
    kind: String,
    image_path: PathBuf,
    mask_path: PathBuf,
    text: Option<String>,
    output_path: PathBuf,
    response_path: PathBuf,
}

fn respond(req: &Request, id: &str, status: &str, message: &str) -> Result<()> {
    let body = json!({
        "request_id": id,
        "output_path": req.output_path,
        "status": status,
        "message": message,
    });
    fs::write(&req.response_path, body.to_string()).context("writing response")
}

fn render(req: &Request, image: &DocumentImage, mask: &Mask) -> Result<DocumentImage> {
    let Some(rect) = mask.bounding_rect() else {
        return Ok(image.clone());
    };
    if req.kind == "inpaint" {
        let bits = (0..rect.h)
            .flat_map(|dy| (0..rect.w).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| mask.get(rect.x + dx, rect.y + dy) as u8)
            .collect();
        let hole = BinaryMaskRegion { region: rect, mask: bits };
        return Ok(edit::inpaint_diffusion(image, &hole, InpaintParams::default())?.image);
    }
    let text = req.text.as_deref().unwrap_or("");
    let mut paper = [0u8; 3];
    let mut ink = [255u8; 3];
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            let p = image.pixel(x, y);
            if luma(p) > luma(paper) {
                paper = p;
            }
            if luma(p) < luma(ink) {
                ink = p;
            }
        }
    }
    let mut out = image.clone();
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            out.set_pixel(x, y, paper);
        }
    }
    let px = rect.h.saturating_sub(4).max(5);
    let r = font::rasterize(text, &FontSpec::default(), px, ink)?;
    let (ox, oy) = (rect.x + 2, rect.y + 2);
    for dy in 0..r.height.min(rect.h.saturating_sub(2)) {
        for dx in 0..r.width.min(rect.w.saturating_sub(2)) {
            let a = r.alpha[(dy * r.width + dx) as usize];
            if a >= 0.5 {
                out.set_pixel(ox + dx, oy + dy, ink);
            }
        }
    }
    Ok(out)
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        bail!("usage: fdvied-stub-gen <mode> <request.json>");
    }
    let mode = args[1].as_str();
    let req: Request = serde_json::from_str(&fs::read_to_string(&args[2]).context("reading request")?)?;
    let image = DocumentImage::load(req.request_id.clone(), &req.image_path)?;
    let mask = Mask::load_png(&req.mask_path)?;

    match mode {
        "identity" => image.save_png(&req.output_path)?,
        "wrong-size" => {
            let bigger = DocumentImage::filled("w", image.width() + 1, image.height(), [255; 3])?;
            bigger.save_png(&req.output_path)?;
        }
        "mutate-outside" => {
            let mut out = image.clone();
            let (x, y) = (0..image.height())
                .flat_map(|y| (0..image.width()).map(move |x| (x, y)))
                .find(|&(x, y)| !mask.get(x, y))
                .context("mask covers the whole image")?;
            let p = image.pixel(x, y);
            out.set_pixel(x, y, p.map(|c| if c > 127 { c - 40 } else { c + 40 }));
            out.save_png(&req.output_path)?;
        }
        "render" => render(&req, &image, &mask)?.save_png(&req.output_path)?,
        "fail" => return respond(&req, &req.request_id, "failed", "stub asked to fail"),
        "crash" => std::process::exit(3),
        "no-response" => {
            image.save_png(&req.output_path)?;
            return Ok(());
        }
        "wrong-id" => {
            image.save_png(&req.output_path)?;
            return respond(&req, "someone-else", "ok", "");
        }
        m if m.starts_with("sleep:") => {
            let ms: u64 = m["sleep:".len()..].parse().context("sleep:<millis>")?;
            thread::sleep(Duration::from_millis(ms));
            image.save_png(&req.output_path)?;
        }
        other => bail!("unknown mode {other:?}"),
    }
    respond(&req, &req.request_id, "ok", "")
}
