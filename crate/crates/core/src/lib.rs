//! Quality-targeted iterative compression for high bit-depth film frames.
//!
//! The flow per frame: parse a DPX or TIFF ([`formats`]), measure it
//! ([`analysis`]), run the encode → decode → measure loop ([`controller`])
//! over the tiled wavelet [`codec`], and write a sealed TIFF. [`pipeline`]
//! runs that flow over batches with a resumable journal.

pub mod analysis;
pub mod codec;
pub mod controller;
pub mod formats;
pub mod frame;
pub mod grid;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use analysis::{analyze_frame, FrameStats, SensitivityMap};
pub use codec::{base_step, decode, encode, Bitstream, CompressionParams};
pub use controller::{compress_to_target, default_profiles, select_profile, Profile, ProfileId};
pub use frame::{ColorSpace, Frame, FrameMetadata};
pub use metrics::{psnr, ssim, Psnr, QualityScore, SsimParams};
