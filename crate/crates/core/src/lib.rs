//! Forged document image synthesis with pixel-exact ground-truth masks, and
//! two-class mIoU evaluation of forgery-localization predictions.
//!
//! The pipeline is: load a corpus of page images with word-level OCR
//! annotations ([`corpus`]), apply one of nine pattern/method edit cases
//! ([`patterns`], built on the raster operations in [`edit`]), write the
//! forged pages, masks and a manifest ([`dataset`]), and score predicted
//! masks against the ground truth ([`eval`]). Generative edits can be
//! delegated to external tools through [`bridge`].

pub mod bridge;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod edit;
pub mod eval;
pub mod font;
pub mod patterns;
pub mod raster;
pub mod synth;

pub use corpus::{OcrAnnotation, TargetPolicy, WordBox};
pub use patterns::{CaseKey, EditPattern, EditRecord, MethodFamily};
pub use raster::{DocumentImage, ForgeryMask, Mask, Region};
