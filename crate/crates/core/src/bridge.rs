//! File-based protocol for delegating generative edits to external tools.
//!
//! For every request the bridge writes the page and mask as PNG files plus
//! a JSON request descriptor into a scratch directory, runs the external
//! command with the descriptor path as its final argument, then reads the
//! JSON response descriptor the tool wrote and validates its output image.
//!
//! Request descriptor (`<scratch>/<request_id>/request.json`):
//!
//! ```json
//! {
//!   "protocol": "fdvied-bridge/1",
//!   "request_id": "r0001",
//!   "kind": "inpaint",                 // or "text_style_transfer"
//!   "image_path": "/abs/page.png",     // RGB, lossless
//!   "mask_path": "/abs/mask.png",      // single channel, 255 = edit here
//!   "text": "680",                     // text_style_transfer only
//!   "output_path": "/abs/output.png",  // where the tool writes its result
//!   "response_path": "/abs/response.json"
//! }
//! ```
//!
//! Response descriptor:
//!
//! ```json
//! {"request_id": "r0001", "output_path": "/abs/output.png", "status": "ok", "message": ""}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{self, BinaryMaskRegion, StringImage};
use crate::patterns::{Generator, GeneratorKind, PatternError};
use crate::raster::{DocumentImage, Mask, RasterError, Region};

pub const PROTOCOL: &str = "fdvied-bridge/1";
/// Largest per-channel change tolerated outside the mask.
pub const OUTSIDE_MASK_TOLERANCE: u8 = 2;
pub const MIN_TIMEOUT_SECS: u64 = 1;
pub const MAX_TIMEOUT_SECS: u64 = 600;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("generator timed out after {0:?}")]
    Timeout(Duration),
    #[error("generator process failed: {0}")]
    ProcessFailure(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("generator modified {count} pixels outside the mask (first at {x},{y})")]
    OutsideMaskModified { count: u64, x: u32, y: u32 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("bridge i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BridgeError + '_ {
    move |source| BridgeError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Inpaint,
    TextStyleTransfer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub kind: RequestKind,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub request_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestDescriptor<'a> {
    protocol: &'a str,
    request_id: &'a str,
    kind: RequestKind,
    image_path: &'a Path,
    mask_path: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    output_path: &'a Path,
    response_path: &'a Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub request_id: String,
    pub output_path: PathBuf,
    pub status: ResponseStatus,
    #[serde(default)]
    pub message: String,
}

/// External program plus leading arguments; the descriptor path is appended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl CommandSpec {
    pub fn new(program: impl Into<String>) -> Self {
        CommandSpec { program: program.into(), args: Vec::new() }
    }

    pub fn arg(mut self, a: impl Into<String>) -> Self {
        self.args.push(a.into());
        self
    }

    /// Splits a whitespace-separated command line.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace();
        let program = parts.next()?.to_string();
        Some(CommandSpec { program, args: parts.map(str::to_string).collect() })
    }
}

fn validate_request(req: &GeneratorRequest) -> Result<(), BridgeError> {
    if req.request_id.is_empty() || req.request_id.contains(['/', '\\']) {
        return Err(BridgeError::InvalidRequest(format!("bad request id {:?}", req.request_id)));
    }
    match (req.kind, &req.text) {
        (RequestKind::TextStyleTransfer, None) => {
            return Err(BridgeError::InvalidRequest("text style transfer needs text".into()))
        }
        (RequestKind::Inpaint, Some(_)) => return Err(BridgeError::InvalidRequest("inpaint takes no text".into())),
        _ => {}
    }
    for p in [&req.image_path, &req.mask_path] {
        if !p.exists() {
            return Err(BridgeError::InvalidRequest(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

/// Runs one request through `exe` and validates what it produced.
///
/// The descriptor pair lives in `scratch`, which must be private to this
/// request. A response with `status: failed` is returned as-is; the output
/// image is only checked for `ok` responses.
pub fn invoke_generator(
    exe: &CommandSpec,
    req: &GeneratorRequest,
    scratch: &Path,
    timeout: Duration,
) -> Result<GeneratorResponse, BridgeError> {
    if timeout < Duration::from_secs(MIN_TIMEOUT_SECS) || timeout > Duration::from_secs(MAX_TIMEOUT_SECS) {
        return Err(BridgeError::InvalidRequest(format!("timeout {timeout:?} outside [1s, 600s]")));
    }
    validate_request(req)?;
    let image = DocumentImage::load(req.request_id.clone(), &req.image_path)?;
    let mask = Mask::load_png(&req.mask_path)?;
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(BridgeError::InvalidRequest("mask and image dimensions differ".into()));
    }

    fs::create_dir_all(scratch).map_err(io_err(scratch))?;
    let scratch = scratch.canonicalize().map_err(io_err(scratch))?;
    let request_path = scratch.join("request.json");
    let response_path = scratch.join("response.json");
    let output_path = scratch.join("output.png");
    let _ = fs::remove_file(&response_path);
    let descriptor = RequestDescriptor {
        protocol: PROTOCOL,
        request_id: &req.request_id,
        kind: req.kind,
        image_path: &req.image_path,
        mask_path: &req.mask_path,
        text: req.text.as_deref(),
        output_path: &output_path,
        response_path: &response_path,
    };
    let body = serde_json::to_string_pretty(&descriptor).expect("descriptor serializes");
    fs::write(&request_path, body).map_err(io_err(&request_path))?;

    let log_path = scratch.join("generator.log");
    let log = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let log_err = log.try_clone().map_err(io_err(&log_path))?;
    let mut child = Command::new(&exe.program)
        .args(&exe.args)
        .arg(&request_path)
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(log_err)
        .spawn()
        .map_err(|e| BridgeError::ProcessFailure(format!("cannot launch {}: {e}", exe.program)))?;

    let start = Instant::now();
    let status = loop {
        match child.try_wait().map_err(|e| BridgeError::ProcessFailure(e.to_string()))? {
            Some(status) => break status,
            None if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BridgeError::Timeout(timeout));
            }
            None => thread::sleep(Duration::from_millis(5)),
        }
    };
    if !status.success() {
        let tail = fs::read_to_string(&log_path).unwrap_or_default();
        return Err(BridgeError::ProcessFailure(format!("{status}: {}", tail.trim())));
    }

    let raw = fs::read_to_string(&response_path)
        .map_err(|_| BridgeError::ProtocolViolation("no response descriptor written".into()))?;
    let resp: GeneratorResponse =
        serde_json::from_str(&raw).map_err(|e| BridgeError::ProtocolViolation(format!("bad response descriptor: {e}")))?;
    if resp.request_id != req.request_id {
        return Err(BridgeError::ProtocolViolation(format!(
            "response id {:?} does not match request {:?}",
            resp.request_id, req.request_id
        )));
    }
    if resp.status == ResponseStatus::Failed {
        return Ok(resp);
    }
    let out = image::open(&resp.output_path)
        .map_err(|e| BridgeError::ProtocolViolation(format!("unreadable output {}: {e}", resp.output_path.display())))?
        .to_rgb8();
    if out.dimensions() != (image.width(), image.height()) {
        return Err(BridgeError::ProtocolViolation(format!(
            "output is {}x{}, request image is {}x{}",
            out.width(),
            out.height(),
            image.width(),
            image.height()
        )));
    }
    let mut count = 0u64;
    let mut first = None;
    for (x, y, p) in out.enumerate_pixels() {
        if mask.get(x, y) {
            continue;
        }
        let orig = image.pixel(x, y);
        if (0..3).any(|c| p.0[c].abs_diff(orig[c]) > OUTSIDE_MASK_TOLERANCE) {
            count += 1;
            first.get_or_insert((x, y));
        }
    }
    if let Some((x, y)) = first {
        return Err(BridgeError::OutsideMaskModified { count, x, y });
    }
    Ok(resp)
}

/// [`Generator`] backed by an external command.
#[derive(Debug)]
pub struct BridgeGenerator {
    pub command: CommandSpec,
    pub scratch: PathBuf,
    pub timeout: Duration,
    counter: AtomicU64,
}

impl BridgeGenerator {
    pub fn new(command: CommandSpec, scratch: PathBuf, timeout: Duration) -> Self {
        BridgeGenerator { command, scratch, timeout, counter: AtomicU64::new(0) }
    }

    fn run(&self, kind: RequestKind, image: &DocumentImage, mask: &Mask, text: Option<&str>) -> Result<DocumentImage, BridgeError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let request_id = format!("req{n:06}");
        let dir = self.scratch.join(&request_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let dir = dir.canonicalize().map_err(io_err(&dir))?;
        let image_path = dir.join("image.png");
        let mask_path = dir.join("mask.png");
        image.save_png(&image_path)?;
        mask.save_png(&mask_path)?;
        let req = GeneratorRequest { kind, image_path, mask_path, text: text.map(str::to_string), request_id };
        let resp = invoke_generator(&self.command, &req, &dir, self.timeout)?;
        if resp.status == ResponseStatus::Failed {
            return Err(BridgeError::ProcessFailure(format!("generator reported failure: {}", resp.message)));
        }
        let out = DocumentImage::load(image.id.clone(), &resp.output_path)?;
        let _ = fs::remove_dir_all(&dir);
        Ok(out)
    }
}

impl Generator for BridgeGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::ExternalBridge
    }

    fn inpaint(&self, image: &DocumentImage, hole: &BinaryMaskRegion) -> Result<DocumentImage, PatternError> {
        let mask = hole.to_mask(image.width(), image.height());
        self.run(RequestKind::Inpaint, image, &mask, None)
            .map_err(|e| PatternError::Generator(e.to_string()))
    }

    fn text_image(&self, image: &DocumentImage, style_ref: Region, text: &str) -> Result<StringImage, PatternError> {
        let mask = Mask::from_region(image.width(), image.height(), style_ref);
        let out = self
            .run(RequestKind::TextStyleTransfer, image, &mask, Some(text))
            .map_err(|e| PatternError::Generator(e.to_string()))?;
        let patch = edit::copy_region(&out, style_ref)?;
        Ok(edit::binarize_otsu(&patch)?)
    }
}
