use adaptix::controller::ProfileId;
use adaptix::formats::{parse_dpx, parse_tiff, write_dpx, write_tiff, Endian, FormatError, Seal};
use adaptix::frame::{ColorSpace, Frame, FrameMetadata};
use adaptix::metrics::Psnr;
use adaptix::{codec, CompressionParams};
use proptest::prelude::*;

const PIXELS: [[u16; 3]; 4] = [[0, 512, 1023], [1, 2, 3], [100, 200, 300], [1023, 0, 512]];

/// Three 10-bit datums per 32-bit word, first datum in the top bits, two
/// padding bits at the bottom.
fn method_a_word(a: u16, b: u16, c: u16) -> u32 {
    (u32::from(a) << 22) | (u32::from(b) << 12) | (u32::from(c) << 2)
}

/// 2×2 RGB 10-bit DPX laid out byte by byte: 2048-byte header, then 4 words.
fn fixture(endian: Endian) -> Vec<u8> {
    let mut b = vec![0u8; 2048];
    let put32 = |b: &mut Vec<u8>, off: usize, v: u32| {
        let bytes = match endian {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        };
        b[off..off + 4].copy_from_slice(&bytes);
    };
    let put16 = |b: &mut Vec<u8>, off: usize, v: u16| {
        let bytes = match endian {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        };
        b[off..off + 2].copy_from_slice(&bytes);
    };
    b[0..4].copy_from_slice(match endian {
        Endian::Big => b"SDPX",
        Endian::Little => b"XPDS",
    });
    put32(&mut b, 4, 2048); // image data offset
    b[8..12].copy_from_slice(b"V2.0");
    put32(&mut b, 16, 2048 + 16); // file size
    put32(&mut b, 24, 1664);
    put32(&mut b, 28, 384);
    put16(&mut b, 768, 0); // orientation
    put16(&mut b, 770, 1); // element count
    put32(&mut b, 772, 2); // pixels per line
    put32(&mut b, 776, 2); // lines
    let el = 780;
    b[el + 20] = 50; // RGB
    b[el + 21] = 2; // linear
    b[el + 23] = 10;
    put16(&mut b, el + 24, 1); // filled, method A
    put16(&mut b, el + 26, 0);
    put32(&mut b, el + 28, 2048);
    put32(&mut b, 1712, 0xFFFF_FFFF); // frame position undefined

    let words = [0x0020_0FFCu32, 0x0040_200C, 0x190C_84B0, 0xFFC0_0800];
    for w in words {
        let bytes = match endian {
            Endian::Big => w.to_be_bytes(),
            Endian::Little => w.to_le_bytes(),
        };
        b.extend_from_slice(&bytes);
    }
    b
}

fn fixture_frame() -> Frame {
    Frame::new(2, 2, 3, 10, PIXELS.concat()).unwrap()
}

#[test]
fn fixture_words_match_bit_shift_oracle() {
    let s = PIXELS.concat();
    let oracle: Vec<u32> = s.chunks(3).map(|c| method_a_word(c[0], c[1], c[2])).collect();
    assert_eq!(oracle, [0x0020_0FFC, 0x0040_200C, 0x190C_84B0, 0xFFC0_0800]);
}

#[test]
fn dpx_fixture_big_endian() {
    let (frame, meta) = parse_dpx(&fixture(Endian::Big)).unwrap();
    assert_eq!(frame.samples(), PIXELS.concat().as_slice());
    assert_eq!((frame.width(), frame.height(), frame.channels(), frame.bit_depth()), (2, 2, 3, 10));
    assert_eq!(frame.color_space(), ColorSpace::LinearRgb);
    assert_eq!(meta.sequence_index, None);
    assert_eq!(meta.capture_date, None);
    assert_eq!(meta.camera, None);
}

#[test]
fn dpx_fixture_is_byte_order_invariant() {
    let (be, _) = parse_dpx(&fixture(Endian::Big)).unwrap();
    let (le, _) = parse_dpx(&fixture(Endian::Little)).unwrap();
    assert_eq!(be, le);
}

#[test]
fn dpx_truncated_and_bad_magic() {
    let f = fixture(Endian::Big);
    assert!(matches!(parse_dpx(&f[..100]), Err(FormatError::Truncated { .. })));
    assert!(matches!(parse_dpx(&f[..f.len() - 1]), Err(FormatError::Truncated { .. })));
    let mut bad = f.clone();
    bad[0] = b'X';
    assert!(matches!(parse_dpx(&bad), Err(FormatError::BadMagic)));
    let mut packing = f.clone();
    packing[780 + 25] = 2;
    assert!(matches!(parse_dpx(&packing), Err(FormatError::UnsupportedPacking { .. })));
    let mut desc = f;
    desc[780 + 20] = 100;
    assert!(matches!(parse_dpx(&desc), Err(FormatError::BadDescriptor(100))));
}

#[test]
fn dpx_writer_matches_fixture_payload() {
    let bytes = write_dpx(&fixture_frame(), &FrameMetadata::default(), Endian::Big).unwrap();
    let data_offset = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    assert_eq!(&bytes[data_offset..data_offset + 16], &fixture(Endian::Big)[2048..]);
    let (back, meta) = parse_dpx(&bytes).unwrap();
    assert_eq!(back.samples(), fixture_frame().samples());
    assert_eq!(meta.sequence_index, None);
}

#[test]
fn dpx_metadata_round_trip() {
    for bit_depth in [10u8, 12, 16] {
        let max = (1u32 << bit_depth) - 1;
        let s: Vec<u16> = (0..5 * 3).map(|i| (i as u32 * 977 % (max + 1)) as u16).collect();
        let f = Frame::new(5, 3, 1, bit_depth, s).unwrap();
        let meta = FrameMetadata {
            name: "reel1_0001.dpx".into(),
            sequence_index: Some(7),
            capture_date: Some("2024:01:02:03:04:05".into()),
            camera: Some("scanner".into()),
            ..FrameMetadata::default()
        };
        for endian in [Endian::Big, Endian::Little] {
            let (g, m) = parse_dpx(&write_dpx(&f, &meta, endian).unwrap()).unwrap();
            assert_eq!(g.samples(), f.samples(), "{bit_depth}-bit {endian:?}");
            assert_eq!((m.name.as_str(), m.sequence_index), ("reel1_0001.dpx", Some(7)));
            assert_eq!(m.capture_date, meta.capture_date);
            assert_eq!(m.camera, meta.camera);
            assert!(m.is_bw());
        }
    }
}

#[test]
fn tiff_fixture_round_trip_and_header() {
    let f = fixture_frame();
    let bytes = write_tiff(&f, None, None).unwrap();
    assert!(bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*"));
    let parsed = parse_tiff(&bytes).unwrap();
    assert_eq!(parsed.frame.unwrap(), f);
    assert!(parsed.seal.is_none() && parsed.payload.is_none());

    let tiny = Frame::filled(1, 1, 1, 10, 0).unwrap();
    assert_eq!(parse_tiff(&write_tiff(&tiny, None, None).unwrap()).unwrap().frame.unwrap(), tiny);
}

#[test]
fn tiff_seal_and_payload_round_trip() {
    let f = fixture_frame();
    let payload = codec::encode(&f, &CompressionParams::lossless(), None).unwrap();
    let seal = Seal {
        profile_id: ProfileId::C1,
        ssim: 0.96,
        psnr: Psnr::Finite(40.0),
        iterations: 3,
        codec_version: codec::CODEC_VERSION.to_string(),
        original_digest: f.digest_hex(),
    };
    let bytes = write_tiff(&f, Some(payload.as_bytes()), Some(&seal)).unwrap();
    let parsed = parse_tiff(&bytes).unwrap();
    assert_eq!(parsed.seal.as_ref(), Some(&seal));
    assert_eq!(parsed.payload.as_deref(), Some(payload.as_bytes()));
    assert!(parsed.frame.is_none());
    assert_eq!((parsed.info.width, parsed.info.height, parsed.info.bit_depth), (2, 2, 10));

    let lossless = Seal { psnr: Psnr::Infinite, ..seal };
    let parsed = parse_tiff(&write_tiff(&f, Some(payload.as_bytes()), Some(&lossless)).unwrap()).unwrap();
    assert_eq!(parsed.seal.unwrap().psnr, Psnr::Infinite);
}

/// Rewrites the value of a SHORT tag in a little-endian TIFF.
fn patch_short_tag(bytes: &mut [u8], tag: u16, value: u16) {
    assert_eq!(&bytes[..2], b"II");
    let ifd = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u16::from_le_bytes(bytes[ifd..ifd + 2].try_into().unwrap()) as usize;
    for i in 0..n {
        let e = ifd + 2 + 12 * i;
        if u16::from_le_bytes(bytes[e..e + 2].try_into().unwrap()) == tag {
            bytes[e + 8..e + 10].copy_from_slice(&value.to_le_bytes());
            return;
        }
    }
    panic!("tag {tag} not found");
}

#[test]
fn tiff_rejects_lzw_and_tiles() {
    let mut bytes = write_tiff(&fixture_frame(), None, None).unwrap();
    patch_short_tag(&mut bytes, 259, 5);
    assert!(matches!(parse_tiff(&bytes), Err(FormatError::UnsupportedTiffFeature(_))));
    let mut bytes = write_tiff(&fixture_frame(), None, None).unwrap();
    patch_short_tag(&mut bytes, 284, 2);
    assert!(matches!(parse_tiff(&bytes), Err(FormatError::UnsupportedTiffFeature(_))));
    assert!(matches!(parse_tiff(b"GIF89a.........."), Err(FormatError::BadMagic)));
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    (1usize..24, 1usize..24, prop_oneof![Just(1usize), Just(3usize)], prop_oneof![Just(10u8), Just(12), Just(16)])
        .prop_flat_map(|(w, h, c, d)| {
            let max = ((1u32 << d) - 1) as u16;
            proptest::collection::vec(0..=max, w * h * c)
                .prop_map(move |s| Frame::new(w, h, c, d, s).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tiff_round_trip_is_bit_exact(f in arb_frame()) {
        let back = parse_tiff(&write_tiff(&f, None, None).unwrap()).unwrap().frame.unwrap();
        prop_assert_eq!(back, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dpx_round_trip_both_orders(f in arb_frame()) {
        let be = parse_dpx(&write_dpx(&f, &FrameMetadata::default(), Endian::Big).unwrap()).unwrap().0;
        let le = parse_dpx(&write_dpx(&f, &FrameMetadata::default(), Endian::Little).unwrap()).unwrap().0;
        prop_assert_eq!(be.samples(), f.samples());
        prop_assert_eq!(le, be);
    }
}
