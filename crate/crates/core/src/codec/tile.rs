//! Per-tile transform, quantization and coefficient coding.
//!
//! A tile is coded independently of every other tile: contexts start fresh,
//! and the payload is self-delimiting. Coefficients are coded band by band
//! (LL first, then coarse to fine) with an adaptive binary range coder:
//! a per-band "any nonzero" flag, then per coefficient a significance bit,
//! a sign bit, a "magnitude > 1" bit and an Exp-Golomb magnitude residual.
//! Significance and "> 1" contexts depend on already-coded neighbours.

use super::consts::{COLOR_RCT, TILE_MODE_CODED, TILE_MODE_RAW};
use super::quant::{band_step_q16, dequantize, quantize};
use super::range_coder::{BitModel, Decoder, Encoder};
use super::wavelet::{self, bands, Band, Filter, Orientation};

const NEIGHBOURHOODS: usize = 5;
const PREFIX_CONTEXTS: usize = 24;
const MAX_PREFIX: usize = 31;

#[derive(Clone, Default)]
struct BandContexts {
    nonzero: BitModel,
    zero: [BitModel; NEIGHBOURHOODS],
    sign: BitModel,
    gt1: [BitModel; NEIGHBOURHOODS],
    prefix: [BitModel; PREFIX_CONTEXTS],
}

/// Contexts for one tile: one set per (channel class, band).
struct Contexts {
    sets: Vec<BandContexts>,
    bands: usize,
}

impl Contexts {
    fn new(bands: usize) -> Self {
        Contexts { sets: vec![BandContexts::default(); 2 * bands], bands }
    }

    fn get(&mut self, channel: usize, band: usize) -> &mut BandContexts {
        let class = usize::from(channel > 0);
        &mut self.sets[class * self.bands + band]
    }
}

/// Geometry and coding parameters shared by every tile of a stream.
#[derive(Debug, Clone, Copy)]
pub struct TileSpec {
    pub w: usize,
    pub h: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub levels: usize,
    pub lossless: bool,
    pub color: u8,
}

impl TileSpec {
    fn filter(&self) -> Filter {
        if self.lossless {
            Filter::Le53
        } else {
            Filter::Cdf97
        }
    }

    fn raw_payload_len(&self) -> usize {
        1 + (self.w * self.h * self.channels * usize::from(self.bit_depth)).div_ceil(8)
    }
}

#[inline]
fn neighbourhood(vals: &[i32], w: usize, x: usize, y: usize) -> usize {
    let at = |xx: usize, yy: usize| vals[yy * w + xx].unsigned_abs();
    let mut m = 0u32;
    if x > 0 {
        m += 2 * at(x - 1, y);
    }
    if y > 0 {
        m += 2 * at(x, y - 1);
        if x > 0 {
            m += at(x - 1, y - 1);
        }
        if x + 1 < w {
            m += at(x + 1, y - 1);
        }
    }
    match m {
        0 => 0,
        1..=2 => 1,
        3..=6 => 2,
        7..=14 => 3,
        _ => 4,
    }
}

#[inline]
fn med_predict(vals: &[i32], w: usize, x: usize, y: usize) -> i32 {
    match (x, y) {
        (0, 0) => 0,
        (_, 0) => vals[x - 1],
        (0, _) => vals[(y - 1) * w],
        _ => {
            let a = vals[y * w + x - 1];
            let b = vals[(y - 1) * w + x];
            let c = vals[(y - 1) * w + x - 1];
            if c >= a.max(b) {
                a.min(b)
            } else if c <= a.min(b) {
                a.max(b)
            } else {
                a + b - c
            }
        }
    }
}

fn encode_value(enc: &mut Encoder, ctx: &mut BandContexts, nb: usize, v: i32) {
    enc.encode(v != 0, &mut ctx.zero[nb]);
    if v == 0 {
        return;
    }
    enc.encode(v < 0, &mut ctx.sign);
    let m = v.unsigned_abs() - 1;
    enc.encode(m > 0, &mut ctx.gt1[nb]);
    if m == 0 {
        return;
    }
    // Exp-Golomb: `n - 1` continuation bits, a terminator, then `n - 1` bits.
    let n = 32 - m.leading_zeros() as usize;
    for i in 0..n - 1 {
        enc.encode(true, &mut ctx.prefix[i.min(PREFIX_CONTEXTS - 1)]);
    }
    enc.encode(false, &mut ctx.prefix[(n - 1).min(PREFIX_CONTEXTS - 1)]);
    enc.encode_direct(m - (1 << (n - 1)), (n - 1) as u32);
}

fn decode_value(dec: &mut Decoder<'_>, ctx: &mut BandContexts, nb: usize) -> Option<i32> {
    if !dec.decode(&mut ctx.zero[nb]) {
        return Some(0);
    }
    let negative = dec.decode(&mut ctx.sign);
    let m = if dec.decode(&mut ctx.gt1[nb]) {
        let mut n = 1usize;
        while dec.decode(&mut ctx.prefix[(n - 1).min(PREFIX_CONTEXTS - 1)]) {
            n += 1;
            if n > MAX_PREFIX || dec.desynced() {
                return None;
            }
        }
        (1u32 << (n - 1)) + dec.decode_direct((n - 1) as u32)
    } else {
        0
    };
    let mag = i32::try_from(m + 1).ok()?;
    Some(if negative { -mag } else { mag })
}

fn band_values(buf: &[i32], stride: usize, band: &Band) -> Vec<i32> {
    let mut out = Vec::with_capacity(band.w * band.h);
    for y in 0..band.h {
        let row = (band.y0 + y) * stride + band.x0;
        out.extend_from_slice(&buf[row..row + band.w]);
    }
    out
}

/// Converts interleaved tile samples into level-shifted, decorrelated planes.
fn forward_components(samples: &[u16], spec: &TileSpec) -> Vec<Vec<i32>> {
    let n = spec.w * spec.h;
    let offset = 1i32 << (spec.bit_depth - 1);
    let mut planes: Vec<Vec<i32>> = (0..spec.channels)
        .map(|c| (0..n).map(|i| i32::from(samples[i * spec.channels + c]) - offset).collect())
        .collect();
    if let (COLOR_RCT, [p0, p1, p2]) = (spec.color, planes.as_mut_slice()) {
        for ((a, b), c) in p0.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
            let (r, g, bl) = (*a, *b, *c);
            *a = (r + 2 * g + bl) >> 2;
            *b = bl - g;
            *c = r - g;
        }
    }
    planes
}

fn inverse_components(mut planes: Vec<Vec<i32>>, spec: &TileSpec) -> Vec<u16> {
    let n = spec.w * spec.h;
    if let (COLOR_RCT, [p0, p1, p2]) = (spec.color, planes.as_mut_slice()) {
        for ((a, b), c) in p0.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
            let (y, u, v) = (*a, *b, *c);
            let g = y - ((u + v) >> 2);
            *a = v + g;
            *b = g;
            *c = u + g;
        }
    }
    let offset = 1i32 << (spec.bit_depth - 1);
    let max = (1i32 << spec.bit_depth) - 1;
    let mut out = vec![0u16; n * spec.channels];
    for (c, plane) in planes.iter().enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            out[i * spec.channels + c] = (v + offset).clamp(0, max) as u16;
        }
    }
    out
}

/// Encodes one tile's interleaved samples into a payload (mode byte first).
pub fn encode_tile(samples: &[u16], spec: &TileSpec, step_q16: u32) -> Vec<u8> {
    let filter = spec.filter();
    let band_list = bands(spec.w, spec.h, spec.levels);
    let mut ctx = Contexts::new(band_list.len());
    let mut enc = Encoder::new();

    for (c, mut plane) in forward_components(samples, spec).into_iter().enumerate() {
        wavelet::forward_2d(&mut plane, spec.w, spec.h, spec.levels, filter);
        for (bi, band) in band_list.iter().enumerate() {
            let mut vals = band_values(&plane, spec.w, band);
            if !spec.lossless {
                let step = band_step_q16(step_q16, band);
                vals.iter_mut().for_each(|v| *v = quantize(*v, step, band.orientation));
            }
            if band.orientation == Orientation::Ll {
                let residuals: Vec<i32> = (0..vals.len())
                    .map(|i| vals[i] - med_predict(&vals, band.w, i % band.w, i / band.w))
                    .collect();
                vals = residuals;
            }
            let bctx = ctx.get(c, bi);
            let any = vals.iter().any(|&v| v != 0);
            enc.encode(any, &mut bctx.nonzero);
            if !any {
                continue;
            }
            for y in 0..band.h {
                for x in 0..band.w {
                    let nb = neighbourhood(&vals, band.w, x, y);
                    encode_value(&mut enc, bctx, nb, vals[y * band.w + x]);
                }
            }
        }
    }

    let coded = enc.finish();
    if 1 + coded.len() >= spec.raw_payload_len() {
        return encode_raw(samples, spec);
    }
    let mut out = Vec::with_capacity(1 + coded.len());
    out.push(TILE_MODE_CODED);
    out.extend_from_slice(&coded);
    out
}

fn encode_raw(samples: &[u16], spec: &TileSpec) -> Vec<u8> {
    let mut out = Vec::with_capacity(spec.raw_payload_len());
    out.push(TILE_MODE_RAW);
    let bits = u32::from(spec.bit_depth);
    let mut acc = 0u64;
    let mut filled = 0u32;
    for &s in samples {
        acc = (acc << bits) | u64::from(s);
        filled += bits;
        while filled >= 8 {
            filled -= 8;
            out.push((acc >> filled) as u8);
        }
    }
    if filled > 0 {
        out.push((acc << (8 - filled)) as u8);
    }
    out
}

fn decode_raw(payload: &[u8], spec: &TileSpec) -> Option<Vec<u16>> {
    if payload.len() != spec.raw_payload_len() - 1 {
        return None;
    }
    let bits = u32::from(spec.bit_depth);
    let count = spec.w * spec.h * spec.channels;
    let mut out = Vec::with_capacity(count);
    let mut acc = 0u64;
    let mut filled = 0u32;
    let mut bytes = payload.iter();
    while out.len() < count {
        while filled < bits {
            acc = (acc << 8) | u64::from(*bytes.next()?);
            filled += 8;
        }
        filled -= bits;
        out.push(((acc >> filled) & ((1 << bits) - 1)) as u16);
    }
    Some(out)
}

/// Decodes a tile payload back to interleaved samples. `None` signals a
/// corrupt or desynchronized payload.
pub fn decode_tile(payload: &[u8], spec: &TileSpec, step_q16: u32) -> Option<Vec<u16>> {
    let (&mode, body) = payload.split_first()?;
    match mode {
        TILE_MODE_RAW => return decode_raw(body, spec),
        TILE_MODE_CODED => {}
        _ => return None,
    }
    let filter = spec.filter();
    let band_list = bands(spec.w, spec.h, spec.levels);
    let mut ctx = Contexts::new(band_list.len());
    let mut dec = Decoder::new(body)?;
    let mut planes = Vec::with_capacity(spec.channels);

    for c in 0..spec.channels {
        let mut plane = vec![0i32; spec.w * spec.h];
        for (bi, band) in band_list.iter().enumerate() {
            let bctx = ctx.get(c, bi);
            let mut vals = vec![0i32; band.w * band.h];
            if dec.decode(&mut bctx.nonzero) {
                for y in 0..band.h {
                    for x in 0..band.w {
                        let nb = neighbourhood(&vals, band.w, x, y);
                        vals[y * band.w + x] = decode_value(&mut dec, bctx, nb)?;
                    }
                }
            }
            if dec.desynced() {
                return None;
            }
            if band.orientation == Orientation::Ll {
                for i in 0..vals.len() {
                    let p = med_predict(&vals, band.w, i % band.w, i / band.w);
                    vals[i] = vals[i].checked_add(p)?;
                }
            }
            let step = (!spec.lossless).then(|| band_step_q16(step_q16, band));
            for y in 0..band.h {
                let row = (band.y0 + y) * spec.w + band.x0;
                for x in 0..band.w {
                    let q = vals[y * band.w + x];
                    plane[row + x] = match step {
                        Some(s) => dequantize(q, s, band.orientation),
                        None => q,
                    };
                }
            }
        }
        wavelet::inverse_2d(&mut plane, spec.w, spec.h, spec.levels, filter);
        planes.push(plane);
    }
    if dec.desynced() {
        return None;
    }
    Some(inverse_components(planes, spec))
}
