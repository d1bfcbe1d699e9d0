//! Patch feature grids and the SFG1 interchange encoding.
//!
//! SFG1 layout, all little-endian:
//!
//! ```text
//! b"SFG1" | u32 height | u32 width | u32 channels | u32 patch_stride_px | f32 * (h*w*c)
//! ```
//!
//! Values are patch-row-major with channels fastest.

use alloc::vec::Vec;

use crate::{Error, Result};

pub const SFG1_MAGIC: [u8; 4] = *b"SFG1";
pub const SFG1_HEADER_LEN: usize = 20;
pub const DEFAULT_PATCH_STRIDE: usize = 8;

/// Per-patch feature vectors for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    patch_stride: usize,
    data: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        patch_stride: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || patch_stride == 0 {
            return Err(Error::ZeroDimension);
        }
        let len = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or(Error::SizeOverflow)?;
        if data.len() != len {
            return Err(Error::LengthMismatch { left: data.len(), right: len });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { height, width, channels, patch_stride, data })
    }

    /// Builds a grid by evaluating `f(row, col, channel)` for every entry.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        patch_stride: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, patch_stride, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch_stride(&self) -> usize {
        self.patch_stride
    }

    pub fn patch_count(&self) -> usize {
        self.height * self.width
    }

    /// Pixel height of the image the grid covers.
    pub fn pixel_height(&self) -> usize {
        self.height * self.patch_stride
    }

    pub fn pixel_width(&self) -> usize {
        self.width * self.patch_stride
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature vector of the patch at `(row, col)`.
    pub fn feature(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Feature vector of patch `index` in row-major order.
    pub fn patch(&self, index: usize) -> &[f32] {
        let start = index * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn to_sfg1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SFG1_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&SFG1_MAGIC);
        for dim in [self.height, self.width, self.channels, self.patch_stride] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_sfg1(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated { expected: SFG1_HEADER_LEN, actual: bytes.len() });
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != SFG1_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < SFG1_HEADER_LEN {
            return Err(Error::Truncated { expected: SFG1_HEADER_LEN, actual: bytes.len() });
        }
        let read_u32 = |at: usize| {
            u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize
        };
        let (h, w, c, stride) = (read_u32(4), read_u32(8), read_u32(12), read_u32(16));
        if h == 0 || w == 0 || c == 0 || stride == 0 {
            return Err(Error::ZeroDimension);
        }
        let count = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(c))
            .ok_or(Error::SizeOverflow)?;
        let expected = count
            .checked_mul(4)
            .and_then(|n| n.checked_add(SFG1_HEADER_LEN))
            .ok_or(Error::SizeOverflow)?;
        if bytes.len() < expected {
            return Err(Error::Truncated { expected, actual: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes { expected, actual: bytes.len() });
        }
        let data = bytes[SFG1_HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(h, w, c, stride, data)
    }
}
