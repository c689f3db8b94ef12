//! Byte images and mask overlays.

use crate::mask::{Mask, MaskError};

/// Fixed palette for per-target overlay colors. Targets get colors in order
/// of first appearance, wrapping after eight.
pub const PALETTE: [[u8; 3]; 8] = [
    [230, 80, 60],
    [60, 140, 230],
    [70, 190, 90],
    [235, 200, 60],
    [170, 90, 220],
    [80, 210, 200],
    [240, 140, 50],
    [230, 110, 180],
];

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new_gray(width: usize, height: usize) -> Self {
        Image { width, height, channels: 1, data: vec![0; width * height] }
    }

    pub fn new_rgb(width: usize, height: usize) -> Self {
        Image { width, height, channels: 3, data: vec![0; width * height * 3] }
    }

    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Option<Self> {
        if (channels == 1 || channels == 3) && data.len() == width * height * channels {
            Some(Image { width, height, channels, data })
        } else {
            None
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, px: &[u8]) {
        let i = (row * self.width + col) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(px);
    }

    /// Gray stays gray; RGB is returned as-is.
    pub fn promote_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut out = Image::new_rgb(self.width, self.height);
        for (i, &v) in self.data.iter().enumerate() {
            out.data[i * 3..i * 3 + 3].copy_from_slice(&[v, v, v]);
        }
        out
    }
}

/// Alpha-blends `color` over the foreground cells of `mask`. The output is
/// always 3-channel; gray input is promoted first, so alpha = 0 returns the
/// promoted input unchanged. Channels round to nearest.
pub fn overlay(image: &Image, mask: &Mask, alpha: f64, color: [u8; 3]) -> Result<Image, MaskError> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(MaskError::DimensionMismatch(
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let mut out = image.promote_rgb();
    for (r, c) in mask.iter_ones() {
        let mut px = [0u8; 3];
        for ch in 0..3 {
            let base = out.pixel(r, c)[ch] as f64;
            px[ch] = ((1.0 - alpha) * base + alpha * color[ch] as f64).round() as u8;
        }
        out.set_pixel(r, c, &px);
    }
    Ok(out)
}
