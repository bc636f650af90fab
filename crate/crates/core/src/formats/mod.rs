//! File formats: DPX input, TIFF output and the provenance seal.

pub mod dpx;
pub mod tiff;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ProfileId;
use crate::frame::FrameError;
use crate::metrics::Psnr;

pub use dpx::{parse_dpx, write_dpx, Endian};
pub use tiff::{parse_tiff, write_tiff, ImageInfo, ParsedTiff};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("truncated input: need {needed} bytes, have {actual}")]
    Truncated { needed: usize, actual: usize },
    #[error("unrecognized magic number")]
    BadMagic,
    #[error("unsupported packing: {bit_size}-bit with packing method {packing}")]
    UnsupportedPacking { bit_size: u8, packing: u16 },
    #[error("unsupported image element descriptor {0}")]
    BadDescriptor(u8),
    #[error("dimension does not fit in 32 bits")]
    DimensionOverflow,
    #[error("payload does not describe this frame, cannot record its bit depth")]
    PayloadWithoutDepthTag,
    #[error("unsupported TIFF feature: {0}")]
    UnsupportedTiffFeature(String),
    #[error("malformed TIFF: {0}")]
    MalformedTiff(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Provenance record stamped into every compressed output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seal {
    pub profile_id: ProfileId,
    pub ssim: f64,
    pub psnr: Psnr,
    pub iterations: u16,
    pub codec_version: String,
    /// Hex SHA-256 of the original frame (see [`crate::frame::Frame::digest_hex`]).
    pub original_digest: String,
}
