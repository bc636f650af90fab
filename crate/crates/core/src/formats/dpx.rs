//! DPX (SMPTE 268M) reader and writer for the subset used by film scans:
//! image element 0 only, RGB or luminance, 10-bit filled Method A,
//! 12-bit filled Method A, or 16-bit.

use std::collections::BTreeSet;

use crate::frame::{ColorSpace, ContentFlag, Frame, FrameMetadata};

use super::FormatError;

const MAGIC_BE: u32 = 0x5344_5058; // "SDPX"
const MAGIC_LE: u32 = 0x5850_4453; // "XPDS" read as big-endian

const GENERIC_HEADER_SIZE: usize = 1664;
const INDUSTRY_HEADER_SIZE: usize = 384;
/// Full header: file + image + orientation + film + television sections.
pub const HEADER_SIZE: usize = GENERIC_HEADER_SIZE + INDUSTRY_HEADER_SIZE;

// File information section.
const OFF_MAGIC: usize = 0;
const OFF_IMAGE_OFFSET: usize = 4;
const OFF_VERSION: usize = 8;
const OFF_FILE_SIZE: usize = 16;
const OFF_GENERIC_SIZE: usize = 24;
const OFF_INDUSTRY_SIZE: usize = 28;
const OFF_USER_SIZE: usize = 32;
const OFF_FILENAME: usize = 36;
const OFF_TIMESTAMP: usize = 136;
// Image information section.
const OFF_ORIENTATION: usize = 768;
const OFF_ELEMENTS: usize = 770;
const OFF_PIXELS_PER_LINE: usize = 772;
const OFF_LINES: usize = 776;
const OFF_ELEMENT0: usize = 780;
// Offsets within an image element.
const EL_DESCRIPTOR: usize = 20;
const EL_TRANSFER: usize = 21;
const EL_COLORIMETRIC: usize = 22;
const EL_BIT_SIZE: usize = 23;
const EL_PACKING: usize = 24;
const EL_ENCODING: usize = 26;
const EL_DATA_OFFSET: usize = 28;
const EL_EOL_PADDING: usize = 32;
const EL_EOI_PADDING: usize = 36;
// Orientation section.
const OFF_INPUT_DEVICE: usize = 1556;
// Film section.
const OFF_FRAME_POSITION: usize = 1712;

const UNDEFINED_U32: u32 = 0xFFFF_FFFF;

pub const DESCRIPTOR_LUMA: u8 = 6;
pub const DESCRIPTOR_RGB: u8 = 50;
const TRANSFER_PRINTING_DENSITY: u8 = 1;
const TRANSFER_LINEAR: u8 = 2;
const TRANSFER_LOG: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Big,
    Little,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn u8(&self, off: usize) -> u8 {
        self.bytes[off]
    }

    fn u16(&self, off: usize) -> u16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Big => u16::from_be_bytes(b),
            Endian::Little => u16::from_le_bytes(b),
        }
    }

    fn u32(&self, off: usize) -> u32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Big => u32::from_be_bytes(b),
            Endian::Little => u32::from_le_bytes(b),
        }
    }

    /// NUL-terminated ASCII field; empty and all-0xFF fields are absent.
    fn ascii(&self, off: usize, len: usize) -> Option<String> {
        let raw = &self.bytes[off..off + len];
        if raw.iter().all(|&b| b == 0xFF) {
            return None;
        }
        let end = raw.iter().position(|&b| b == 0).unwrap_or(len);
        let s = String::from_utf8_lossy(&raw[..end]).trim().to_string();
        (!s.is_empty()).then_some(s)
    }
}

/// Parses a DPX file into a frame plus whatever metadata the header defines.
pub fn parse_dpx(bytes: &[u8]) -> Result<(Frame, FrameMetadata), FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated { needed: 4, actual: bytes.len() });
    }
    let endian = match u32::from_be_bytes(bytes[0..4].try_into().unwrap()) {
        MAGIC_BE => Endian::Big,
        MAGIC_LE => Endian::Little,
        _ => return Err(FormatError::BadMagic),
    };
    // Everything up to the end of the film section must be present.
    let fixed = OFF_FRAME_POSITION + 4;
    if bytes.len() < fixed {
        return Err(FormatError::Truncated { needed: fixed, actual: bytes.len() });
    }
    let r = Reader { bytes, endian };

    let width = r.u32(OFF_PIXELS_PER_LINE) as usize;
    let height = r.u32(OFF_LINES) as usize;
    let el = OFF_ELEMENT0;
    let descriptor = r.u8(el + EL_DESCRIPTOR);
    let transfer = r.u8(el + EL_TRANSFER);
    let bit_size = r.u8(el + EL_BIT_SIZE);
    let packing = r.u16(el + EL_PACKING);
    let encoding = r.u16(el + EL_ENCODING);
    let eol_padding = match r.u32(el + EL_EOL_PADDING) {
        UNDEFINED_U32 => 0,
        p => p as usize,
    };

    let channels = match descriptor {
        DESCRIPTOR_RGB => 3,
        DESCRIPTOR_LUMA => 1,
        other => return Err(FormatError::BadDescriptor(other)),
    };
    if encoding != 0 {
        return Err(FormatError::UnsupportedPacking { bit_size, packing });
    }
    let layout = match (bit_size, packing) {
        (10, 1) => Packing::TenBitFilledA,
        (12, 1) => Packing::TwelveBitFilledA,
        (16, 0) | (16, 1) => Packing::Sixteen,
        _ => return Err(FormatError::UnsupportedPacking { bit_size, packing }),
    };
    if width == 0 || height == 0 {
        return Err(FormatError::Frame(crate::frame::FrameError::EmptyDimensions { width, height }));
    }

    let data_offset = match r.u32(el + EL_DATA_OFFSET) {
        UNDEFINED_U32 | 0 => r.u32(OFF_IMAGE_OFFSET) as usize,
        off => off as usize,
    };
    let line_bytes = layout.line_bytes(width * channels) + eol_padding;
    let payload = line_bytes
        .checked_mul(height)
        .ok_or(FormatError::DimensionOverflow)?;
    let needed = data_offset.checked_add(payload).ok_or(FormatError::DimensionOverflow)?;
    if bytes.len() < needed {
        return Err(FormatError::Truncated { needed, actual: bytes.len() });
    }

    let mut samples = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        let start = data_offset + y * line_bytes;
        layout.unpack_line(&r, start, width * channels, &mut samples);
    }

    let color_space = match (channels, transfer) {
        (1, _) => ColorSpace::Gray,
        (_, TRANSFER_LOG) | (_, TRANSFER_PRINTING_DENSITY) => ColorSpace::Log,
        _ => ColorSpace::LinearRgb,
    };
    let frame = Frame::new(width, height, channels, bit_size, samples)?.with_color_space(color_space);

    let mut content_flags = BTreeSet::new();
    content_flags.insert(if channels == 1 { ContentFlag::Bw } else { ContentFlag::Color });
    let metadata = FrameMetadata {
        name: r.ascii(OFF_FILENAME, 100).unwrap_or_default(),
        sequence_index: match r.u32(OFF_FRAME_POSITION) {
            UNDEFINED_U32 => None,
            v => Some(v),
        },
        capture_date: r.ascii(OFF_TIMESTAMP, 24),
        camera: r.ascii(OFF_INPUT_DEVICE, 32),
        content_flags,
        annotations: Vec::new(),
    };
    let frame = if metadata.name.is_empty() { frame } else { frame.with_source_id(metadata.name.clone()) };
    Ok((frame, metadata))
}

#[derive(Clone, Copy)]
enum Packing {
    TenBitFilledA,
    TwelveBitFilledA,
    Sixteen,
}

impl Packing {
    fn line_bytes(self, datums: usize) -> usize {
        match self {
            Packing::TenBitFilledA => datums.div_ceil(3) * 4,
            Packing::TwelveBitFilledA | Packing::Sixteen => datums * 2,
        }
    }

    fn unpack_line(self, r: &Reader<'_>, start: usize, datums: usize, out: &mut Vec<u16>) {
        match self {
            Packing::TenBitFilledA => {
                for i in 0..datums {
                    let word = r.u32(start + (i / 3) * 4);
                    let shift = 22 - 10 * (i % 3);
                    out.push(((word >> shift) & 0x3FF) as u16);
                }
            }
            Packing::TwelveBitFilledA => {
                for i in 0..datums {
                    out.push(r.u16(start + 2 * i) >> 4);
                }
            }
            Packing::Sixteen => {
                for i in 0..datums {
                    out.push(r.u16(start + 2 * i));
                }
            }
        }
    }

    fn pack_line(self, samples: &[u16], endian: Endian, out: &mut Vec<u8>) {
        let put16 = |out: &mut Vec<u8>, v: u16| match endian {
            Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
            Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        };
        match self {
            Packing::TenBitFilledA => {
                for chunk in samples.chunks(3) {
                    let mut word = 0u32;
                    for (i, &s) in chunk.iter().enumerate() {
                        word |= u32::from(s & 0x3FF) << (22 - 10 * i);
                    }
                    match endian {
                        Endian::Big => out.extend_from_slice(&word.to_be_bytes()),
                        Endian::Little => out.extend_from_slice(&word.to_le_bytes()),
                    }
                }
            }
            Packing::TwelveBitFilledA => samples.iter().for_each(|&s| put16(out, s << 4)),
            Packing::Sixteen => samples.iter().for_each(|&s| put16(out, s)),
        }
    }
}

/// Writes a single-element DPX file. Fields the metadata leaves absent are
/// written with the format's "undefined" fill values.
pub fn write_dpx(frame: &Frame, metadata: &FrameMetadata, endian: Endian) -> Result<Vec<u8>, FormatError> {
    let width = u32::try_from(frame.width()).map_err(|_| FormatError::DimensionOverflow)?;
    let height = u32::try_from(frame.height()).map_err(|_| FormatError::DimensionOverflow)?;
    let layout = match frame.bit_depth() {
        10 => Packing::TenBitFilledA,
        12 => Packing::TwelveBitFilledA,
        _ => Packing::Sixteen,
    };
    let datums = frame.width() * frame.channels();
    let payload = layout.line_bytes(datums) * frame.height();
    let total = HEADER_SIZE + payload;
    let total_u32 = u32::try_from(total).map_err(|_| FormatError::DimensionOverflow)?;

    let mut h = vec![0u8; HEADER_SIZE];
    // Undefined fill for the orientation, film and television sections.
    h[1408..HEADER_SIZE].fill(0xFF);
    let put32 = |h: &mut [u8], off: usize, v: u32| {
        let b = match endian {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        };
        h[off..off + 4].copy_from_slice(&b);
    };
    let put16 = |h: &mut [u8], off: usize, v: u16| {
        let b = match endian {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        };
        h[off..off + 2].copy_from_slice(&b);
    };
    let put_ascii = |h: &mut [u8], off: usize, len: usize, s: &str| {
        let field = &mut h[off..off + len];
        field.fill(0);
        let n = s.len().min(len - 1);
        field[..n].copy_from_slice(&s.as_bytes()[..n]);
    };

    put32(&mut h, OFF_MAGIC, MAGIC_BE);
    put32(&mut h, OFF_IMAGE_OFFSET, HEADER_SIZE as u32);
    put_ascii(&mut h, OFF_VERSION, 8, "V2.0");
    put32(&mut h, OFF_FILE_SIZE, total_u32);
    put32(&mut h, OFF_GENERIC_SIZE, GENERIC_HEADER_SIZE as u32);
    put32(&mut h, OFF_INDUSTRY_SIZE, INDUSTRY_HEADER_SIZE as u32);
    put32(&mut h, OFF_USER_SIZE, 0);
    put_ascii(&mut h, OFF_FILENAME, 100, &metadata.name);
    match &metadata.capture_date {
        Some(d) => put_ascii(&mut h, OFF_TIMESTAMP, 24, d),
        None => h[OFF_TIMESTAMP..OFF_TIMESTAMP + 24].fill(0),
    }

    put16(&mut h, OFF_ORIENTATION, 0);
    put16(&mut h, OFF_ELEMENTS, 1);
    put32(&mut h, OFF_PIXELS_PER_LINE, width);
    put32(&mut h, OFF_LINES, height);
    // Unused image elements 1..7 are undefined.
    h[OFF_ELEMENT0 + 72..1408].fill(0xFF);
    let el = OFF_ELEMENT0;
    put32(&mut h, el, 0);
    let (descriptor, transfer) = match (frame.channels(), frame.color_space()) {
        (1, _) => (DESCRIPTOR_LUMA, TRANSFER_LINEAR),
        (_, ColorSpace::Log) => (DESCRIPTOR_RGB, TRANSFER_LOG),
        _ => (DESCRIPTOR_RGB, TRANSFER_LINEAR),
    };
    h[el + EL_DESCRIPTOR] = descriptor;
    h[el + EL_TRANSFER] = transfer;
    h[el + EL_COLORIMETRIC] = transfer;
    h[el + EL_BIT_SIZE] = frame.bit_depth();
    put16(&mut h, el + EL_PACKING, if frame.bit_depth() == 16 { 0 } else { 1 });
    put16(&mut h, el + EL_ENCODING, 0);
    put32(&mut h, el + EL_DATA_OFFSET, HEADER_SIZE as u32);
    put32(&mut h, el + EL_EOL_PADDING, 0);
    put32(&mut h, el + EL_EOI_PADDING, 0);

    match &metadata.camera {
        Some(c) => put_ascii(&mut h, OFF_INPUT_DEVICE, 32, c),
        None => h[OFF_INPUT_DEVICE..OFF_INPUT_DEVICE + 32].fill(0),
    }
    put32(&mut h, OFF_FRAME_POSITION, metadata.sequence_index.unwrap_or(UNDEFINED_U32));

    let mut out = h;
    out.reserve(payload);
    for line in frame.samples().chunks(datums) {
        layout.pack_line(line, endian, &mut out);
    }
    Ok(out)
}
