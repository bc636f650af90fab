//! Baseline TIFF writer/reader with a private compression code for codec
//! payloads and private tags carrying the true bit depth and the seal.

use crate::controller::ProfileId;
use crate::frame::{ColorSpace, Frame};
use crate::metrics::Psnr;

use super::{FormatError, Seal};

pub const COMPRESSION_NONE: u16 = 1;
/// Private compression code marking an embedded codec payload.
pub const COMPRESSION_ADAPTIX: u16 = 65480;

pub const TAG_IMAGE_WIDTH: u16 = 256;
pub const TAG_IMAGE_LENGTH: u16 = 257;
pub const TAG_BITS_PER_SAMPLE: u16 = 258;
pub const TAG_COMPRESSION: u16 = 259;
pub const TAG_PHOTOMETRIC: u16 = 262;
pub const TAG_DOCUMENT_NAME: u16 = 269;
pub const TAG_STRIP_OFFSETS: u16 = 273;
pub const TAG_SAMPLES_PER_PIXEL: u16 = 277;
pub const TAG_ROWS_PER_STRIP: u16 = 278;
pub const TAG_STRIP_BYTE_COUNTS: u16 = 279;
pub const TAG_PLANAR_CONFIG: u16 = 284;
pub const TAG_TILE_WIDTH: u16 = 322;
pub const TAG_TILE_OFFSETS: u16 = 324;

pub const TAG_TRUE_BIT_DEPTH: u16 = 65481;
pub const TAG_SEAL_PROFILE: u16 = 65482;
pub const TAG_SEAL_SSIM: u16 = 65483;
pub const TAG_SEAL_PSNR: u16 = 65484;
pub const TAG_SEAL_ITERATIONS: u16 = 65485;
pub const TAG_SEAL_CODEC_VERSION: u16 = 65486;
pub const TAG_SEAL_DIGEST: u16 = 65487;
pub const TAG_COLOR_SPACE: u16 = 65488;

/// Stand-in for an infinite PSNR inside a DOUBLE tag.
pub const PSNR_INFINITE_TAG_VALUE: f64 = 1.0e308;

const TYPE_BYTE: u16 = 1;
const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

/// Shape information available for every parsed TIFF, even when the pixels
/// are still inside a codec payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
    /// Bits per sample as stored in the file (8 or 16).
    pub stored_bits: u16,
    pub color_space: ColorSpace,
    pub source_id: String,
}

#[derive(Debug, Clone)]
pub struct ParsedTiff {
    pub info: ImageInfo,
    /// Decoded pixels; `None` when the file carries a codec payload.
    pub frame: Option<Frame>,
    pub seal: Option<Seal>,
    pub payload: Option<Vec<u8>>,
}

pub(crate) fn checked_dim(v: usize) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::DimensionOverflow)
}

struct Entry {
    tag: u16,
    kind: u16,
    count: u32,
    data: Vec<u8>,
}

impl Entry {
    fn short(tag: u16, values: &[u16]) -> Self {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Entry { tag, kind: TYPE_SHORT, count: values.len() as u32, data }
    }

    fn long(tag: u16, value: u32) -> Self {
        Entry { tag, kind: TYPE_LONG, count: 1, data: value.to_le_bytes().to_vec() }
    }

    fn ascii(tag: u16, s: &str) -> Self {
        let mut data = s.as_bytes().to_vec();
        data.push(0);
        Entry { tag, kind: TYPE_ASCII, count: data.len() as u32, data }
    }

    fn double(tag: u16, v: f64) -> Self {
        Entry { tag, kind: TYPE_DOUBLE, count: 1, data: v.to_le_bytes().to_vec() }
    }
}

/// Writes a little-endian, single-strip TIFF.
///
/// Without a payload the samples are stored uncompressed in 16-bit
/// containers. With a payload the strip holds the codec stream verbatim and
/// the compression tag carries [`COMPRESSION_ADAPTIX`].
pub fn write_tiff(frame: &Frame, payload: Option<&[u8]>, seal: Option<&Seal>) -> Result<Vec<u8>, FormatError> {
    let width = checked_dim(frame.width())?;
    let height = checked_dim(frame.height())?;
    let channels = frame.channels() as u16;

    let strip: Vec<u8> = match payload {
        None => frame.samples().iter().flat_map(|s| s.to_le_bytes()).collect(),
        Some(p) => {
            let header = crate::codec::peek_header(p).map_err(|_| FormatError::PayloadWithoutDepthTag)?;
            if header.bit_depth != frame.bit_depth()
                || header.width != frame.width()
                || header.height != frame.height()
                || header.channels != frame.channels()
            {
                return Err(FormatError::PayloadWithoutDepthTag);
            }
            p.to_vec()
        }
    };
    let strip_len = checked_dim(strip.len())?;

    let photometric = if channels == 1 { 1 } else { 2 };
    let mut entries = vec![
        Entry::long(TAG_IMAGE_WIDTH, width),
        Entry::long(TAG_IMAGE_LENGTH, height),
        Entry::short(TAG_BITS_PER_SAMPLE, &vec![16; channels as usize]),
        Entry::short(TAG_COMPRESSION, &[if payload.is_some() { COMPRESSION_ADAPTIX } else { COMPRESSION_NONE }]),
        Entry::short(TAG_PHOTOMETRIC, &[photometric]),
        Entry::long(TAG_STRIP_OFFSETS, 0), // patched below
        Entry::short(TAG_SAMPLES_PER_PIXEL, &[channels]),
        Entry::long(TAG_ROWS_PER_STRIP, height),
        Entry::long(TAG_STRIP_BYTE_COUNTS, strip_len),
        Entry::short(TAG_PLANAR_CONFIG, &[1]),
        Entry::short(TAG_TRUE_BIT_DEPTH, &[u16::from(frame.bit_depth())]),
        Entry::ascii(TAG_COLOR_SPACE, frame.color_space().as_str()),
    ];
    if !frame.source_id().is_empty() {
        entries.push(Entry::ascii(TAG_DOCUMENT_NAME, frame.source_id()));
    }
    if let Some(seal) = seal {
        entries.push(Entry::ascii(TAG_SEAL_PROFILE, seal.profile_id.as_str()));
        entries.push(Entry::double(TAG_SEAL_SSIM, seal.ssim));
        entries.push(Entry::double(TAG_SEAL_PSNR, seal.psnr.to_tag_value()));
        entries.push(Entry::short(TAG_SEAL_ITERATIONS, &[seal.iterations]));
        entries.push(Entry::ascii(TAG_SEAL_CODEC_VERSION, &seal.codec_version));
        entries.push(Entry::ascii(TAG_SEAL_DIGEST, &seal.original_digest));
    }
    entries.sort_by_key(|e| e.tag);

    // Layout: header | strip | pad | IFD | out-of-line values.
    let strip_offset = 8u64;
    let ifd_offset = (strip_offset + strip.len() as u64).next_multiple_of(2);
    let ifd_len = 2 + 12 * entries.len() as u64 + 4;
    let mut extra_offset = ifd_offset + ifd_len;
    let total_guess = extra_offset + entries.iter().map(|e| e.data.len() as u64 + 1).sum::<u64>();
    if total_guess > u64::from(u32::MAX) {
        return Err(FormatError::DimensionOverflow);
    }

    for e in entries.iter_mut().filter(|e| e.tag == TAG_STRIP_OFFSETS) {
        e.data = (strip_offset as u32).to_le_bytes().to_vec();
    }

    let mut out = Vec::with_capacity(total_guess as usize);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&(ifd_offset as u32).to_le_bytes());
    out.extend_from_slice(&strip);
    out.resize(ifd_offset as usize, 0);

    let mut extra = Vec::new();
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for e in &entries {
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.extend_from_slice(&e.kind.to_le_bytes());
        out.extend_from_slice(&e.count.to_le_bytes());
        if e.data.len() <= 4 {
            let mut inline = [0u8; 4];
            inline[..e.data.len()].copy_from_slice(&e.data);
            out.extend_from_slice(&inline);
        } else {
            out.extend_from_slice(&(extra_offset as u32).to_le_bytes());
            extra.extend_from_slice(&e.data);
            if e.data.len() % 2 == 1 {
                extra.push(0);
            }
            extra_offset = ifd_offset + ifd_len + extra.len() as u64;
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&extra);
    Ok(out)
}

struct TiffReader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

#[derive(Debug)]
struct RawEntry {
    tag: u16,
    kind: u16,
    count: u32,
    value_at: usize,
}

impl<'a> TiffReader<'a> {
    fn slice(&self, off: usize, len: usize) -> Result<&'a [u8], FormatError> {
        off.checked_add(len)
            .and_then(|end| self.bytes.get(off..end))
            .ok_or(FormatError::Truncated { needed: off.saturating_add(len), actual: self.bytes.len() })
    }

    fn u16(&self, off: usize) -> Result<u16, FormatError> {
        let b: [u8; 2] = self.slice(off, 2)?.try_into().unwrap();
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, off: usize) -> Result<u32, FormatError> {
        let b: [u8; 4] = self.slice(off, 4)?.try_into().unwrap();
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn f64(&self, off: usize) -> Result<f64, FormatError> {
        let b: [u8; 8] = self.slice(off, 8)?.try_into().unwrap();
        Ok(if self.big_endian { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) })
    }

    fn entry_at(&self, off: usize) -> Result<RawEntry, FormatError> {
        let tag = self.u16(off)?;
        let kind = self.u16(off + 2)?;
        let count = self.u32(off + 4)?;
        let unit = match kind {
            TYPE_BYTE | TYPE_ASCII => 1,
            TYPE_SHORT => 2,
            TYPE_LONG => 4,
            TYPE_DOUBLE => 8,
            _ => 0,
        };
        let size = unit * count as usize;
        let value_at = if size <= 4 { off + 8 } else { self.u32(off + 8)? as usize };
        Ok(RawEntry { tag, kind, count, value_at })
    }

    fn uints(&self, e: &RawEntry) -> Result<Vec<u32>, FormatError> {
        (0..e.count as usize)
            .map(|i| match e.kind {
                TYPE_SHORT => self.u16(e.value_at + 2 * i).map(u32::from),
                TYPE_LONG => self.u32(e.value_at + 4 * i),
                TYPE_BYTE => self.slice(e.value_at + i, 1).map(|b| u32::from(b[0])),
                _ => Err(FormatError::MalformedTiff(format!("tag {} is not an integer", e.tag))),
            })
            .collect()
    }

    fn ascii(&self, e: &RawEntry) -> Result<String, FormatError> {
        if e.kind != TYPE_ASCII {
            return Err(FormatError::MalformedTiff(format!("tag {} is not ASCII", e.tag)));
        }
        let raw = self.slice(e.value_at, e.count as usize)?;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
        Ok(String::from_utf8_lossy(&raw[..end]).into_owned())
    }

    fn double(&self, e: &RawEntry) -> Result<f64, FormatError> {
        if e.kind != TYPE_DOUBLE || e.count != 1 {
            return Err(FormatError::MalformedTiff(format!("tag {} is not a DOUBLE", e.tag)));
        }
        self.f64(e.value_at)
    }
}

/// Parses the first IFD of a TIFF written by [`write_tiff`] or a baseline
/// uncompressed 8/16-bit chunky TIFF.
pub fn parse_tiff(bytes: &[u8]) -> Result<ParsedTiff, FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::Truncated { needed: 8, actual: bytes.len() });
    }
    let big_endian = match &bytes[0..2] {
        b"II" => false,
        b"MM" => true,
        _ => return Err(FormatError::BadMagic),
    };
    let r = TiffReader { bytes, big_endian };
    if r.u16(2)? != 42 {
        return Err(FormatError::BadMagic);
    }
    let ifd = r.u32(4)? as usize;
    let n = r.u16(ifd)? as usize;
    let entries: Vec<RawEntry> = (0..n).map(|i| r.entry_at(ifd + 2 + 12 * i)).collect::<Result<_, _>>()?;
    let find = |tag: u16| entries.iter().find(|e| e.tag == tag);
    let required = |tag: u16| find(tag).ok_or_else(|| FormatError::MalformedTiff(format!("missing tag {tag}")));
    let scalar = |tag: u16| -> Result<u32, FormatError> {
        r.uints(required(tag)?)?
            .first()
            .copied()
            .ok_or_else(|| FormatError::MalformedTiff(format!("empty tag {tag}")))
    };

    if find(TAG_TILE_WIDTH).is_some() || find(TAG_TILE_OFFSETS).is_some() {
        return Err(FormatError::UnsupportedTiffFeature("tiled layout".into()));
    }
    let compression = match find(TAG_COMPRESSION) {
        Some(e) => r.uints(e)?.first().copied().unwrap_or(1) as u16,
        None => COMPRESSION_NONE,
    };
    if compression != COMPRESSION_NONE && compression != COMPRESSION_ADAPTIX {
        return Err(FormatError::UnsupportedTiffFeature(format!("compression {compression}")));
    }
    if let Some(e) = find(TAG_PLANAR_CONFIG) {
        if r.uints(e)?.first().copied() != Some(1) {
            return Err(FormatError::UnsupportedTiffFeature("planar configuration 2".into()));
        }
    }
    let width = scalar(TAG_IMAGE_WIDTH)? as usize;
    let height = scalar(TAG_IMAGE_LENGTH)? as usize;
    let channels = match find(TAG_SAMPLES_PER_PIXEL) {
        Some(e) => r.uints(e)?.first().copied().unwrap_or(1) as usize,
        None => 1,
    };
    if channels != 1 && channels != 3 {
        return Err(FormatError::UnsupportedTiffFeature(format!("{channels} samples per pixel")));
    }
    let bits = match find(TAG_BITS_PER_SAMPLE) {
        Some(e) => r.uints(e)?,
        None => vec![1],
    };
    let stored_bits = bits[0] as u16;
    if bits.iter().any(|&b| b != u32::from(stored_bits)) || (stored_bits != 8 && stored_bits != 16) {
        return Err(FormatError::UnsupportedTiffFeature(format!("bits per sample {bits:?}")));
    }
    let photometric = match find(TAG_PHOTOMETRIC) {
        Some(e) => r.uints(e)?.first().copied().unwrap_or(1),
        None => if channels == 3 { 2 } else { 1 },
    };
    if !(photometric == 1 && channels == 1 || photometric == 2 && channels == 3) {
        return Err(FormatError::UnsupportedTiffFeature(format!("photometric {photometric}")));
    }
    let bit_depth = match find(TAG_TRUE_BIT_DEPTH) {
        Some(e) => {
            let d = r.uints(e)?.first().copied().unwrap_or(16);
            u8::try_from(d).map_err(|_| FormatError::MalformedTiff(format!("bit depth {d}")))?
        }
        None => 16,
    };
    let color_space = match find(TAG_COLOR_SPACE) {
        Some(e) => {
            let s = r.ascii(e)?;
            ColorSpace::parse(&s).ok_or_else(|| FormatError::MalformedTiff(format!("color space {s}")))?
        }
        None if channels == 1 => ColorSpace::Gray,
        None => ColorSpace::LinearRgb,
    };
    let source_id = match find(TAG_DOCUMENT_NAME) {
        Some(e) => r.ascii(e)?,
        None => String::new(),
    };

    let offsets = r.uints(required(TAG_STRIP_OFFSETS)?)?;
    let counts = r.uints(required(TAG_STRIP_BYTE_COUNTS)?)?;
    if offsets.len() != counts.len() {
        return Err(FormatError::MalformedTiff("strip offset/count mismatch".into()));
    }
    let mut strip = Vec::new();
    for (&off, &len) in offsets.iter().zip(&counts) {
        strip.extend_from_slice(r.slice(off as usize, len as usize)?);
    }

    let seal = parse_seal(&r, &entries)?;
    let info = ImageInfo { width, height, channels, bit_depth, stored_bits, color_space, source_id };

    if compression == COMPRESSION_ADAPTIX {
        return Ok(ParsedTiff { info, frame: None, seal, payload: Some(strip) });
    }

    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or(FormatError::DimensionOverflow)?;
    let bytes_per = usize::from(stored_bits / 8);
    if strip.len() < count * bytes_per {
        return Err(FormatError::Truncated { needed: count * bytes_per, actual: strip.len() });
    }
    let samples: Vec<u16> = if stored_bits == 8 {
        // Promote to full 16-bit scale: 0xAB -> 0xABAB.
        strip[..count].iter().map(|&b| u16::from(b) * 257).collect()
    } else {
        strip[..count * 2]
            .chunks_exact(2)
            .map(|c| if big_endian { u16::from_be_bytes([c[0], c[1]]) } else { u16::from_le_bytes([c[0], c[1]]) })
            .collect()
    };
    let frame = Frame::new(width, height, channels, bit_depth, samples)?
        .with_color_space(color_space)
        .with_source_id(info.source_id.clone());
    Ok(ParsedTiff { info, frame: Some(frame), seal, payload: None })
}

fn parse_seal(r: &TiffReader<'_>, entries: &[RawEntry]) -> Result<Option<Seal>, FormatError> {
    let find = |tag: u16| entries.iter().find(|e| e.tag == tag);
    let Some(profile) = find(TAG_SEAL_PROFILE) else {
        return Ok(None);
    };
    let missing = |tag: u16| FormatError::MalformedTiff(format!("incomplete seal: missing tag {tag}"));
    let profile_str = r.ascii(profile)?;
    let profile_id = ProfileId::parse(&profile_str)
        .ok_or_else(|| FormatError::MalformedTiff(format!("unknown profile {profile_str}")))?;
    let ssim = r.double(find(TAG_SEAL_SSIM).ok_or_else(|| missing(TAG_SEAL_SSIM))?)?;
    let psnr = Psnr::from_tag_value(r.double(find(TAG_SEAL_PSNR).ok_or_else(|| missing(TAG_SEAL_PSNR))?)?);
    let iterations = r
        .uints(find(TAG_SEAL_ITERATIONS).ok_or_else(|| missing(TAG_SEAL_ITERATIONS))?)?
        .first()
        .copied()
        .ok_or_else(|| missing(TAG_SEAL_ITERATIONS))? as u16;
    let codec_version = r.ascii(find(TAG_SEAL_CODEC_VERSION).ok_or_else(|| missing(TAG_SEAL_CODEC_VERSION))?)?;
    let original_digest = r.ascii(find(TAG_SEAL_DIGEST).ok_or_else(|| missing(TAG_SEAL_DIGEST))?)?;
    Ok(Some(Seal { profile_id, ssim, psnr, iterations, codec_version, original_digest }))
}
