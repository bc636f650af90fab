//! Tiled wavelet codec producing self-describing "ATC1" streams.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   magic "ATC1"
//! 4   u8  format version
//! 5   u8  flags (bit 0: lossless / reversible 5/3 path)
//! 6   u8  component transform (0 none, 1 RCT)
//! 7   u8  color space (0 LINEAR_RGB, 1 LOG, 2 GRAY)
//! 8   u8  channels
//! 9   u8  bit depth
//! 10  u8  requested decomposition levels
//! 11  u8  reserved (0)
//! 12  u16 tile size
//! 14  u32 width
//! 18  u32 height
//! 22  f64 quality scalar q
//! 30  u32 tile count
//! 34  u32 x tile count: per-tile base step, Q16.16
//! ..  u32 CRC-32 of every preceding header byte
//! then per tile, row-major: u32 payload length, u32 CRC-32 of payload, payload
//! ```
//!
//! See FORMAT.md at the repository root for the payload grammar.

pub mod consts;
pub mod quant;
pub mod range_coder;
pub mod tile;
pub mod wavelet;

use thiserror::Error;

use crate::analysis::SensitivityMap;
use crate::frame::{ColorSpace, Frame};
use crate::grid::{Grid, TileGrid};
use crate::par;

pub use consts::{CODEC_VERSION, DEFAULT_LEVELS, TILE_SIZE};
use consts::*;
use tile::TileSpec;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("invalid compression parameters: {0}")]
    ParamInvalid(String),
    #[error("quality scalar {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("stream does not start with ATC1 magic")]
    BadMagic,
    #[error("corrupt stream ({reason}); affected tiles: {tiles:?}")]
    CorruptStream { tiles: Vec<usize>, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `2^(q / 12.5)`: 1 at q = 0, 16 at q = 50, 256 at q = 100.
pub fn base_step(q: f64) -> Result<f64, CodecError> {
    if !(0.0..=Q_MAX).contains(&q) {
        return Err(CodecError::OutOfRange(q));
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    Ok((q / Q_OCTAVE).exp2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionParams {
    pub q: f64,
    /// Per-tile step multipliers in `[0.25, 4]`.
    pub tile_modulation: Option<Grid<f64>>,
    pub levels: u8,
    pub lossless: bool,
}

impl CompressionParams {
    pub fn new(q: f64) -> Self {
        CompressionParams { q, tile_modulation: None, levels: DEFAULT_LEVELS, lossless: q == 0.0 }
    }

    pub fn lossless() -> Self {
        Self::new(0.0)
    }

    pub fn with_modulation(mut self, modulation: Grid<f64>) -> Self {
        self.tile_modulation = Some(modulation);
        self
    }

    fn is_lossless(&self) -> bool {
        self.lossless || self.q == 0.0
    }

    fn validate(&self, grid: &TileGrid) -> Result<(), CodecError> {
        base_step(self.q)?;
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(CodecError::ParamInvalid(format!("levels {} outside 1..={MAX_LEVELS}", self.levels)));
        }
        if let Some(m) = &self.tile_modulation {
            if !m.matches(grid) {
                return Err(CodecError::ParamInvalid(format!(
                    "modulation grid {}x{} does not match tile grid {}x{}",
                    m.cols,
                    m.rows,
                    grid.cols(),
                    grid.rows()
                )));
            }
            if m.values.iter().any(|v| !(MODULATION_MIN..=MODULATION_MAX).contains(v)) {
                return Err(CodecError::ParamInvalid("modulation outside [0.25, 4]".into()));
            }
        }
        Ok(())
    }
}

/// An encoded ATC1 stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream(Vec<u8>);

impl Bitstream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Bitstream(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn header(&self) -> Result<Header, CodecError> {
        peek_header(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u8,
    pub lossless: bool,
    pub color_transform: u8,
    pub color_space: ColorSpace,
    pub channels: usize,
    pub bit_depth: u8,
    pub levels: u8,
    pub tile_size: usize,
    pub width: usize,
    pub height: usize,
    pub q: f64,
    pub tile_steps_q16: Vec<u32>,
    /// Offset of the first tile segment.
    pub payload_offset: usize,
}

const FIXED_HEADER: usize = 34;

fn color_space_code(cs: ColorSpace) -> u8 {
    match cs {
        ColorSpace::LinearRgb => 0,
        ColorSpace::Log => 1,
        ColorSpace::Gray => 2,
    }
}

impl Header {
    pub fn grid(&self) -> TileGrid {
        TileGrid::new(self.width, self.height, self.tile_size)
    }

    fn write(&self, out: &mut Vec<u8>) {
        let start = out.len();
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.push(if self.lossless { FLAG_LOSSLESS } else { 0 });
        out.push(self.color_transform);
        out.push(color_space_code(self.color_space));
        out.push(self.channels as u8);
        out.push(self.bit_depth);
        out.push(self.levels);
        out.push(0);
        out.extend_from_slice(&(self.tile_size as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&(self.tile_steps_q16.len() as u32).to_le_bytes());
        for s in &self.tile_steps_q16 {
            out.extend_from_slice(&s.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
}

fn header_corrupt(reason: &str) -> CodecError {
    CodecError::CorruptStream { tiles: Vec::new(), reason: reason.to_string() }
}

/// Parses and checks the stream header without touching tile payloads.
pub fn peek_header(bytes: &[u8]) -> Result<Header, CodecError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    if bytes.len() < FIXED_HEADER + 4 {
        return Err(header_corrupt("header truncated"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let tile_count = u32_at(30) as usize;
    let steps_end = tile_count
        .checked_mul(4)
        .and_then(|n| n.checked_add(FIXED_HEADER))
        .filter(|&e| e + 4 <= bytes.len())
        .ok_or_else(|| header_corrupt("step table truncated"))?;
    let crc = u32_at(steps_end);
    if crc32fast::hash(&bytes[..steps_end]) != crc {
        return Err(header_corrupt("header checksum mismatch"));
    }
    let version = bytes[4];
    if version != FORMAT_VERSION {
        return Err(header_corrupt("unknown format version"));
    }
    let color_space = match bytes[7] {
        0 => ColorSpace::LinearRgb,
        1 => ColorSpace::Log,
        2 => ColorSpace::Gray,
        _ => return Err(header_corrupt("unknown color space")),
    };
    let header = Header {
        version,
        lossless: bytes[5] & FLAG_LOSSLESS != 0,
        color_transform: bytes[6],
        color_space,
        channels: usize::from(bytes[8]),
        bit_depth: bytes[9],
        levels: bytes[10],
        tile_size: usize::from(u16_at(12)),
        width: u32_at(14) as usize,
        height: u32_at(18) as usize,
        q: f64::from_le_bytes(bytes[22..30].try_into().unwrap()),
        tile_steps_q16: (0..tile_count).map(|t| u32_at(FIXED_HEADER + 4 * t)).collect(),
        payload_offset: steps_end + 4,
    };
    if header.width == 0 || header.height == 0 || header.tile_size == 0 {
        return Err(CodecError::DimensionMismatch("zero dimension in header".into()));
    }
    if !(header.channels == 1 || header.channels == 3) || !crate::frame::SUPPORTED_DEPTHS.contains(&header.bit_depth) {
        return Err(CodecError::DimensionMismatch("unsupported channel count or depth".into()));
    }
    if header.color_transform > COLOR_RCT || (header.color_transform == COLOR_RCT && header.channels != 3) {
        return Err(CodecError::DimensionMismatch("component transform does not fit channel count".into()));
    }
    if header.levels == 0 || header.levels > MAX_LEVELS {
        return Err(CodecError::DimensionMismatch("level count out of range".into()));
    }
    if header.grid().len() != tile_count {
        return Err(CodecError::DimensionMismatch(format!(
            "{} tiles declared, {}x{} at tile size {} needs {}",
            tile_count,
            header.width,
            header.height,
            header.tile_size,
            header.grid().len()
        )));
    }
    Ok(header)
}

fn tile_spec(header: &Header, w: usize, h: usize) -> TileSpec {
    TileSpec {
        w,
        h,
        channels: header.channels,
        bit_depth: header.bit_depth,
        levels: usize::from(header.levels),
        lossless: header.lossless,
        color: header.color_transform,
    }
}

fn extract_tile(frame: &Frame, rect: (usize, usize, usize, usize)) -> Vec<u16> {
    let (x0, y0, w, h) = rect;
    let c = frame.channels();
    let mut out = Vec::with_capacity(w * h * c);
    for y in y0..y0 + h {
        let start = (y * frame.width() + x0) * c;
        out.extend_from_slice(&frame.samples()[start..start + w * c]);
    }
    out
}

/// Per-tile base step in Q16: `base_step(q) · depth scale · modulation / weight`.
fn tile_steps(
    frame: &Frame,
    params: &CompressionParams,
    map: Option<&SensitivityMap>,
    grid: &TileGrid,
) -> Result<Vec<u32>, CodecError> {
    if params.is_lossless() {
        return Ok(vec![Q16_ONE; grid.len()]);
    }
    let depth_scale = 2f64.powi(i32::from(frame.bit_depth()) - i32::from(STEP_REFERENCE_DEPTH));
    let base = base_step(params.q)? * depth_scale;
    Ok((0..grid.len())
        .map(|t| {
            let modulation = params.tile_modulation.as_ref().map_or(1.0, |m| m.values[t]);
            let weight = map.map_or(1.0, |m| m.weights.values[t]);
            let step = base * modulation / weight;
            (step * f64::from(Q16_ONE)).round().clamp(f64::from(Q16_ONE), f64::from(u32::MAX)) as u32
        })
        .collect())
}

/// Encodes a frame. Tiles are coded concurrently but emitted in row-major
/// order, so the output is identical for any thread count.
pub fn encode(frame: &Frame, params: &CompressionParams, map: Option<&SensitivityMap>) -> Result<Bitstream, CodecError> {
    let grid = TileGrid::new(frame.width(), frame.height(), TILE_SIZE);
    params.validate(&grid)?;
    if let Some(m) = map {
        if m.tile_size != TILE_SIZE || !m.weights.matches(&grid) {
            return Err(CodecError::ParamInvalid("sensitivity map does not match tile grid".into()));
        }
    }
    if frame.width() > u32::MAX as usize || frame.height() > u32::MAX as usize {
        return Err(CodecError::DimensionMismatch("frame dimension exceeds 32 bits".into()));
    }
    let lossless = params.is_lossless();
    let header = Header {
        version: FORMAT_VERSION,
        lossless,
        color_transform: if frame.channels() == 3 { COLOR_RCT } else { COLOR_NONE },
        color_space: frame.color_space(),
        channels: frame.channels(),
        bit_depth: frame.bit_depth(),
        levels: params.levels,
        tile_size: TILE_SIZE,
        width: frame.width(),
        height: frame.height(),
        q: if lossless { 0.0 } else { params.q },
        tile_steps_q16: tile_steps(frame, params, map, &grid)?,
        payload_offset: 0,
    };

    let payloads = par::map_range(grid.len(), |t| {
        let rect = grid.rect(t);
        let spec = tile_spec(&header, rect.2, rect.3);
        tile::encode_tile(&extract_tile(frame, rect), &spec, header.tile_steps_q16[t])
    });

    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * grid.len() + payloads.iter().map(|p| p.len() + 8).sum::<usize>());
    header.write(&mut out);
    for p in &payloads {
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(p).to_le_bytes());
        out.extend_from_slice(p);
    }
    Ok(Bitstream(out))
}

/// Result of a decode that tolerates damaged tiles.
#[derive(Debug, Clone)]
pub struct LenientDecode {
    pub frame: Frame,
    /// Tiles whose payload failed its checksum or desynchronized; they are
    /// filled with mid-grey.
    pub corrupt_tiles: Vec<usize>,
}

/// Decodes every intact tile; damaged tiles are reported, not fatal.
pub fn decode_lenient(bytes: &[u8]) -> Result<LenientDecode, CodecError> {
    let header = peek_header(bytes)?;
    let grid = header.grid();

    // Walk the length prefixes; an overrun makes the remaining tiles unreachable.
    let mut segments: Vec<Option<&[u8]>> = Vec::with_capacity(grid.len());
    let mut pos = header.payload_offset;
    for _ in 0..grid.len() {
        let seg = bytes.get(pos..pos + 8).and_then(|prefix| {
            let len = u32::from_le_bytes(prefix[..4].try_into().unwrap()) as usize;
            let crc = u32::from_le_bytes(prefix[4..].try_into().unwrap());
            let body = bytes.get(pos + 8..(pos + 8).checked_add(len)?)?;
            pos += 8 + len;
            Some((body, crc))
        });
        match seg {
            Some((body, crc)) => segments.push((crc32fast::hash(body) == crc).then_some(body)),
            None => {
                segments.resize(grid.len(), None);
                break;
            }
        }
    }

    let decoded = par::map_range(grid.len(), |t| {
        let (_, _, w, h) = grid.rect(t);
        let spec = tile_spec(&header, w, h);
        segments[t].and_then(|p| tile::decode_tile(p, &spec, header.tile_steps_q16[t]))
    });

    let c = header.channels;
    let mid = 1u16 << (header.bit_depth - 1);
    let mut samples = vec![mid; header.width * header.height * c];
    let mut corrupt_tiles = Vec::new();
    for (t, tile) in decoded.into_iter().enumerate() {
        let Some(tile) = tile else {
            corrupt_tiles.push(t);
            continue;
        };
        let (x0, y0, w, _) = grid.rect(t);
        for (row, chunk) in tile.chunks_exact(w * c).enumerate() {
            let start = ((y0 + row) * header.width + x0) * c;
            samples[start..start + w * c].copy_from_slice(chunk);
        }
    }
    let frame = Frame::new(header.width, header.height, c, header.bit_depth, samples)
        .map_err(|e| CodecError::DimensionMismatch(e.to_string()))?
        .with_color_space(header.color_space);
    Ok(LenientDecode { frame, corrupt_tiles })
}

/// Decodes a stream, failing with [`CodecError::CorruptStream`] if any tile
/// is damaged.
pub fn decode(bytes: &[u8]) -> Result<Frame, CodecError> {
    let out = decode_lenient(bytes)?;
    if !out.corrupt_tiles.is_empty() {
        return Err(CodecError::CorruptStream { tiles: out.corrupt_tiles, reason: "tile payload damaged".into() });
    }
    Ok(out.frame)
}

/// Compression ratio relative to the frame packed at its nominal bit depth.
pub fn compression_ratio(frame: &Frame, stream: &Bitstream) -> f64 {
    frame.packed_size_bytes() as f64 / stream.len() as f64
}
