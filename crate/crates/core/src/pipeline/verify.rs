//! Independent re-check of a sealed output against its original.

use serde::Serialize;
use thiserror::Error;

use crate::codec::{self, CodecError};
use crate::controller::ProfileTable;
use crate::formats::{self, FormatError, Seal};
use crate::frame::Frame;
use crate::metrics::{self, MetricsError, Psnr, SsimParams};

/// Sealed and recomputed metrics may differ by at most this much.
pub const SEAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("TIFF has no compressed payload")]
    NoPayload,
    #[error("TIFF has no seal")]
    NoSeal,
    #[error("payload does not decode: {0}")]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seal: Seal,
    pub measured_ssim: f64,
    pub measured_psnr_db: Psnr,
    pub digest_matches: bool,
    pub ssim_matches: bool,
    pub psnr_matches: bool,
    pub thresholds_met: bool,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.digest_matches && self.ssim_matches && self.psnr_matches && self.thresholds_met
    }
}

fn psnr_close(a: Psnr, b: Psnr) -> bool {
    match (a, b) {
        (Psnr::Infinite, Psnr::Infinite) => true,
        (Psnr::Finite(x), Psnr::Finite(y)) => (x - y).abs() <= SEAL_TOLERANCE,
        _ => false,
    }
}

/// Decodes the payload, recomputes SSIM/PSNR against `original` and checks
/// them against the seal and the sealed profile's thresholds.
pub fn verify_sealed(tiff: &[u8], original: &Frame, profiles: &ProfileTable) -> Result<VerifyReport, VerifyError> {
    let parsed = formats::parse_tiff(tiff)?;
    let seal = parsed.seal.ok_or(VerifyError::NoSeal)?;
    let payload = parsed.payload.ok_or(VerifyError::NoPayload)?;
    let decoded = codec::decode(&payload)?;
    let score = metrics::ssim(original, &decoded, &SsimParams::default())?;
    let profile = profiles.get(seal.profile_id);
    Ok(VerifyReport {
        digest_matches: original.digest_hex() == seal.original_digest,
        ssim_matches: (score.ssim - seal.ssim).abs() <= SEAL_TOLERANCE,
        psnr_matches: psnr_close(score.psnr, seal.psnr),
        thresholds_met: profile.is_met_by(&score),
        measured_ssim: score.ssim,
        measured_psnr_db: score.psnr,
        seal,
    })
}
