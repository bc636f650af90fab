//! Every constant that shapes the byte stream lives here, so an independent
//! implementation can reproduce streams bit-exactly.

/// Tile side length in pixels.
pub const TILE_SIZE: usize = 64;
/// Default number of wavelet decomposition levels.
pub const DEFAULT_LEVELS: u8 = 4;
/// Largest level count the gain tables cover.
pub const MAX_LEVELS: u8 = 8;

/// Fixed-point shift for lifting coefficients and quantizer steps.
pub const LIFT_SHIFT: u32 = 16;
pub const Q16_ONE: u32 = 1 << 16;

/// CDF 9/7 lifting coefficients (alpha, beta, gamma, delta) in Q16:
/// -1.586134342, -0.052980119, 0.882911076, 0.443506852.
pub const LIFT_97_Q16: [i64; 4] = [-103_949, -3_472, 57_862, 29_066];

/// Reciprocal L2 norm (Q16) of the 1-D 9/7 synthesis basis function after
/// `k` low-pass stages, `k = 0..=8` (index 0: untransformed axis).
pub const INV_LOW_NORM_Q16: [u32; 9] = [65_536, 57_500, 48_847, 42_054, 36_471, 31_700, 27_569, 23_980, 20_859];
/// Reciprocal L2 norm (Q16) of the 1-D 9/7 synthesis basis function for a
/// high-pass band preceded by `k - 1` low-pass stages, `k = 1..=8`.
pub const INV_HIGH_NORM_Q16: [u32; 9] = [0, 73_862, 66_637, 55_910, 47_825, 41_395, 35_961, 31_271, 27_199];

/// `base_step(q) = 2^(q / Q_OCTAVE)`, so q = 100 gives a step of 256.
pub const Q_OCTAVE: f64 = 12.5;
pub const Q_MAX: f64 = 100.0;
/// Steps are expressed in LSBs of this bit depth and scaled by
/// `2^(depth - STEP_REFERENCE_DEPTH)` for deeper frames.
pub const STEP_REFERENCE_DEPTH: u8 = 10;

/// Bounds on per-tile step multipliers (both sensitivity weights and
/// controller modulation).
pub const MODULATION_MIN: f64 = 0.25;
pub const MODULATION_MAX: f64 = 4.0;

pub const MAGIC: [u8; 4] = *b"ATC1";
pub const FORMAT_VERSION: u8 = 1;
pub const CODEC_VERSION: &str = concat!("adaptix-atc1/", env!("CARGO_PKG_VERSION"));

pub const FLAG_LOSSLESS: u8 = 0x01;

pub const COLOR_NONE: u8 = 0;
/// Reversible component transform (integer YCbCr-like) on 3-channel frames.
pub const COLOR_RCT: u8 = 1;

pub const TILE_MODE_CODED: u8 = 0;
pub const TILE_MODE_RAW: u8 = 1;
