//! Decoded raster frames and the metadata that travels with them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    BadChannels(usize),
    #[error("unsupported bit depth {0} (expected 10, 12 or 16)")]
    BadBitDepth(u8),
    #[error("sample buffer holds {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sample {value} at index {index} exceeds the {bit_depth}-bit range")]
    SampleOutOfRange { index: usize, value: u16, bit_depth: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColorSpace {
    LinearRgb,
    Log,
    Gray,
}

impl ColorSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorSpace::LinearRgb => "LINEAR_RGB",
            ColorSpace::Log => "LOG",
            ColorSpace::Gray => "GRAY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LINEAR_RGB" => Some(ColorSpace::LinearRgb),
            "LOG" => Some(ColorSpace::Log),
            "GRAY" => Some(ColorSpace::Gray),
            _ => None,
        }
    }
}

/// A decoded raster. Samples are stored row-major with channels interleaved,
/// one `u16` per sample regardless of the nominal bit depth.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: u8,
    samples: Vec<u16>,
    color_space: ColorSpace,
    source_id: String,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .field("bit_depth", &self.bit_depth)
            .field("color_space", &self.color_space)
            .field("source_id", &self.source_id)
            .finish_non_exhaustive()
    }
}

pub const SUPPORTED_DEPTHS: [u8; 3] = [10, 12, 16];

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        samples: Vec<u16>,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(FrameError::BadChannels(channels));
        }
        if !SUPPORTED_DEPTHS.contains(&bit_depth) {
            return Err(FrameError::BadBitDepth(bit_depth));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or(FrameError::LengthMismatch { expected: usize::MAX, actual: samples.len() })?;
        if samples.len() != expected {
            return Err(FrameError::LengthMismatch { expected, actual: samples.len() });
        }
        if bit_depth < 16 {
            let max = (1u32 << bit_depth) - 1;
            if let Some((index, &value)) =
                samples.iter().enumerate().find(|(_, &v)| u32::from(v) > max)
            {
                return Err(FrameError::SampleOutOfRange { index, value, bit_depth });
            }
        }
        let color_space = if channels == 1 { ColorSpace::Gray } else { ColorSpace::LinearRgb };
        Ok(Frame {
            width,
            height,
            channels,
            bit_depth,
            samples,
            color_space,
            source_id: String::new(),
        })
    }

    /// Frame filled with a single value in every sample.
    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        value: u16,
    ) -> Result<Self, FrameError> {
        Self::new(width, height, channels, bit_depth, vec![value; width * height * channels])
    }

    pub fn with_color_space(mut self, color_space: ColorSpace) -> Self {
        self.color_space = color_space;
        self
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
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

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u16 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self.bit_depth == other.bit_depth
    }

    /// Size of the samples when packed at their nominal bit depth.
    pub fn packed_size_bytes(&self) -> u64 {
        (self.samples.len() as u64 * u64::from(self.bit_depth)).div_ceil(8)
    }

    /// SHA-256 over a canonical encoding of shape and samples, hex encoded.
    pub fn digest_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ADXF");
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update([self.channels as u8, self.bit_depth]);
        let mut buf = Vec::with_capacity(self.samples.len() * 2);
        for s in &self.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        h.update(&buf);
        hex::encode(h.finalize())
    }

    /// Horizontal mirror image.
    pub fn mirrored(&self) -> Frame {
        let mut out = Vec::with_capacity(self.samples.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let base = (y * self.width + x) * self.channels;
                out.extend_from_slice(&self.samples[base..base + self.channels]);
            }
        }
        Frame { samples: out, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContentFlag {
    Bw,
    Color,
    Subtitles,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub name: String,
    /// Absent when the source header leaves the frame position undefined.
    pub sequence_index: Option<u32>,
    pub capture_date: Option<String>,
    pub camera: Option<String>,
    pub content_flags: BTreeSet<ContentFlag>,
    /// Opaque free-text notes (e.g. from a colorist); never inferred.
    pub annotations: Vec<String>,
}

impl FrameMetadata {
    pub fn is_bw(&self) -> bool {
        self.content_flags.contains(&ContentFlag::Bw)
    }
}
