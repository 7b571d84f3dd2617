//! RGB image storage with channel values in `[0, 1]`.

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major interleaved RGB image, each channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must have non-zero dimensions"));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} RGB image, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * CHANNELS).collect();
        Self::new(width, height, data)
    }

    /// Converts interleaved 8-bit RGB.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Interleaved 8-bit RGB, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Mean of the three channels at pixel index `idx` (row-major).
    pub fn brightness_at(&self, idx: usize) -> f32 {
        let i = idx * CHANNELS;
        (self.data[i] + self.data[i + 1] + self.data[i + 2]) / 3.0
    }

    /// Copies pixel `idx` from `src` into `self`. Both images must share dimensions.
    pub(crate) fn copy_pixel_from(&mut self, src: &ImageBuffer, idx: usize) {
        let i = idx * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&src.data[i..i + CHANNELS]);
    }

    pub fn set_pixel_rgb(&mut self, idx: usize, rgb: [f32; 3]) {
        let i = idx * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    /// Builds an image from raw parts the caller guarantees are valid.
    pub(crate) fn from_parts_unchecked(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        Self { width, height, data }
    }
}
