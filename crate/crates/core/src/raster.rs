//! Raster primitives shared by every stage: document images, rectangular
//! regions and binary masks.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted side length of a document image.
pub const MIN_DOCUMENT_SIDE: u32 = 64;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("document image {width}x{height} is smaller than {MIN_DOCUMENT_SIDE}x{MIN_DOCUMENT_SIDE}")]
    TooSmall { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("mask {mask_w}x{mask_h} does not match image {image_w}x{image_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        image_w: u32,
        image_h: u32,
    },
    #[error("mask contains value {0}, expected 0 or 1")]
    NonBinary(u8),
    #[error("image i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Axis-aligned rectangle in pixel coordinates (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Region {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Region { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Non-empty and fully inside a `width` x `height` raster.
    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64
    }

    /// True when the two rectangles share a region of positive area.
    pub fn intersects(&self, other: &Region) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        if !self.intersects(other) {
            return None;
        }
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        Some(Region::new(x, y, r - x, b - y))
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains(&self, other: &Region) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.x, self.y, self.w, self.h)
    }
}

/// An RGB document page, 8 bits per channel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentImage {
    pub id: String,
    pixels: RgbImage,
}

impl DocumentImage {
    pub fn new(id: impl Into<String>, pixels: RgbImage) -> Result<Self, RasterError> {
        let (width, height) = pixels.dimensions();
        if width < MIN_DOCUMENT_SIDE || height < MIN_DOCUMENT_SIDE {
            return Err(RasterError::TooSmall { width, height });
        }
        Ok(DocumentImage { id: id.into(), pixels })
    }

    pub fn from_raw(id: impl Into<String>, width: u32, height: u32, buf: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize * 3;
        if buf.len() != expected {
            return Err(RasterError::BufferLength { expected, actual: buf.len() });
        }
        let pixels = RgbImage::from_raw(width, height, buf).expect("length checked above");
        Self::new(id, pixels)
    }

    /// Uniformly colored page.
    pub fn filled(id: impl Into<String>, width: u32, height: u32, color: [u8; 3]) -> Result<Self, RasterError> {
        Self::new(id, RgbImage::from_pixel(width, height, Rgb(color)))
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn bounds(&self) -> Region {
        Region::new(0, 0, self.width(), self.height())
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels.get_pixel(x, y).0
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.pixels.put_pixel(x, y, Rgb(rgb));
    }

    pub fn as_raw(&self) -> &[u8] {
        self.pixels.as_raw()
    }

    pub fn rgb(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(id, img.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        self.pixels
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| RasterError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    /// Mask of pixels where `self` and `other` differ in any channel.
    pub fn diff_mask(&self, other: &DocumentImage) -> Result<Mask, RasterError> {
        if self.width() != other.width() || self.height() != other.height() {
            return Err(RasterError::DimensionMismatch {
                mask_w: other.width(),
                mask_h: other.height(),
                image_w: self.width(),
                image_h: self.height(),
            });
        }
        let data = self
            .as_raw()
            .chunks_exact(3)
            .zip(other.as_raw().chunks_exact(3))
            .map(|(a, b)| u8::from(a != b))
            .collect();
        Ok(Mask { width: self.width(), height: self.height(), data })
    }
}

/// Binary raster, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Per-pixel authentic (0) / forged (1) ground truth.
pub type ForgeryMask = Mask;

impl Mask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Mask { width, height, data: vec![0; width as usize * height as usize] }
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Mask { width, height, data: vec![1; width as usize * height as usize] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(RasterError::BufferLength { expected, actual: data.len() });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > 1) {
            return Err(RasterError::NonBinary(bad));
        }
        Ok(Mask { width, height, data })
    }

    /// Full-size mask with `region` set.
    pub fn from_region(width: u32, height: u32, region: Region) -> Self {
        let mut m = Mask::zeros(width, height);
        m.fill_region(region, 1);
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[y as usize * self.width as usize + x as usize] = u8::from(on);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn count(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    pub fn fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn fill_region(&mut self, region: Region, value: u8) {
        for y in region.y..region.bottom().min(self.height) {
            for x in region.x..region.right().min(self.width) {
                self.data[y as usize * self.width as usize + x as usize] = value;
            }
        }
    }

    fn check_same_dims(&self, other: &Mask) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::DimensionMismatch {
                mask_w: other.width,
                mask_h: other.height,
                image_w: self.width,
                image_h: self.height,
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.check_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
        Ok(Mask { width: self.width, height: self.height, data })
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.check_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect();
        Ok(Mask { width: self.width, height: self.height, data })
    }

    /// `self` is set only where `other` is set.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Number of set pixels inside `region`.
    pub fn count_in(&self, region: Region) -> u64 {
        let mut n = 0;
        for y in region.y..region.bottom().min(self.height) {
            for x in region.x..region.right().min(self.width) {
                n += self.data[y as usize * self.width as usize + x as usize] as u64;
            }
        }
        n
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bounding_rect(&self) -> Option<Region> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != u32::MAX).then(|| Region::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Flip every label.
    pub fn inverted(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Single-channel {0,255} raster.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.get(x, y) { 255 } else { 0 }]))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        self.to_gray()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| RasterError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    /// Loads a label raster. 8-bit values are read as probabilities
    /// `v / 255` and 16-bit values as `v / 65535`; a pixel is forged when
    /// its probability is at least 0.5. Strict {0,255} masks decode exactly.
    pub fn load_png(path: &Path) -> Result<Mask, RasterError> {
        let img = image::open(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let (width, height) = (img.width(), img.height());
        let data = match img {
            image::DynamicImage::ImageLuma16(_) | image::DynamicImage::ImageLumaA16(_) | image::DynamicImage::ImageRgb16(_) => img
                .to_luma16()
                .into_raw()
                .into_iter()
                .map(|v| u8::from(v as u32 * 2 >= u16::MAX as u32))
                .collect(),
            _ => img
                .to_luma8()
                .into_raw()
                .into_iter()
                .map(|v| u8::from(v as u32 * 2 >= u8::MAX as u32))
                .collect(),
        };
        Ok(Mask { width, height, data })
    }
}

/// Integer luma `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    ((299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32 + 500) / 1000) as u8
}
