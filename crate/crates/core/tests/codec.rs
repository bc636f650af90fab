use adaptix::analysis::SensitivityMap;
use adaptix::codec::consts::{INV_HIGH_NORM_Q16, INV_LOW_NORM_Q16};
use adaptix::codec::{self, base_step, decode_lenient, CodecError, CompressionParams};
use adaptix::frame::Frame;
use adaptix::grid::Grid;
use adaptix::metrics::{ssim, SsimParams};
use adaptix::synth::{acceptance_corpus, generate, Scene};
use proptest::prelude::*;

#[test]
fn base_step_law() {
    assert_eq!(base_step(0.0).unwrap(), 1.0);
    assert!((base_step(50.0).unwrap() - 16.0).abs() < 1e-12);
    assert!((base_step(100.0).unwrap() - 256.0).abs() < 1e-12);
    assert!(matches!(base_step(-0.5), Err(CodecError::OutOfRange(_))));
    assert!(matches!(base_step(100.5), Err(CodecError::OutOfRange(_))));
    let steps: Vec<f64> = (1..=100).map(|q| base_step(f64::from(q)).unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[1] > w[0]));
}

// Float 9/7 lifting coefficients, no final scaling.
const A: f64 = -1.586_134_342_059_924;
const B: f64 = -0.052_980_118_572_961;
const G: f64 = 0.882_911_075_530_934;
const D: f64 = 0.443_506_852_043_971;

fn inverse_step(low: &[f64], high: &[f64]) -> Vec<f64> {
    let n = low.len() + high.len();
    let mut x = vec![0.0; n];
    for (i, v) in low.iter().enumerate() {
        x[2 * i] = *v;
    }
    for (i, v) in high.iter().enumerate() {
        x[2 * i + 1] = *v;
    }
    let m = |i: isize| -> usize {
        let n = n as isize;
        let i = if i < 0 { -i } else { i };
        (if i >= n { 2 * (n - 1) - i } else { i }) as usize
    };
    for (parity, c) in [(0, D), (1, G), (0, B), (1, A)] {
        let mut i = parity;
        while i < n {
            let s = x[m(i as isize - 1)] + x[m(i as isize + 1)];
            x[i] -= c * s;
            i += 2;
        }
    }
    x
}

/// L2 norm of the synthesis basis function for an impulse in the low band
/// after `k` stages (`high = false`) or in the high band of stage `k`.
fn basis_norm(k: usize, high: bool) -> f64 {
    let n = 1 << 16;
    let coarse = n >> k;
    let mut low = vec![0.0; coarse];
    let mut hi = vec![0.0; coarse];
    if high {
        hi[coarse / 2] = 1.0;
    } else {
        low[coarse / 2] = 1.0;
    }
    let mut signal = inverse_step(&low, &hi);
    for _ in 1..k {
        let zeros = vec![0.0; signal.len()];
        signal = inverse_step(&signal, &zeros);
    }
    signal.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn gain_tables_match_float_synthesis_norms() {
    assert_eq!(INV_LOW_NORM_Q16[0], 65_536);
    for k in 1..=8 {
        let low = 65_536.0 / basis_norm(k, false);
        let high = 65_536.0 / basis_norm(k, true);
        assert!((f64::from(INV_LOW_NORM_Q16[k]) - low).abs() <= 1.0, "low {k}: table {} vs {low:.1}", INV_LOW_NORM_Q16[k]);
        assert!((f64::from(INV_HIGH_NORM_Q16[k]) - high).abs() <= 1.0, "high {k}: table {} vs {high:.1}", INV_HIGH_NORM_Q16[k]);
    }
}

#[test]
fn constant_megapixel_frame_is_tiny() {
    let f = Frame::filled(1024, 1024, 1, 10, 700).unwrap();
    let s = codec::encode(&f, &CompressionParams::new(50.0), None).unwrap();
    let raw = f.packed_size_bytes();
    assert!((s.len() as u64) * 100 < raw, "{} bytes vs raw {raw}", s.len());
    let d = codec::decode(s.as_bytes()).unwrap();
    let worst = d.samples().iter().map(|&v| (i32::from(v) - 700).abs()).max().unwrap();
    assert!(worst <= 8, "max error {worst}");
}

#[test]
fn noise_is_incompressible_but_bounded() {
    for channels in [1, 3] {
        let f = generate(Scene::Noise, 256, 192, channels, 10, 4);
        let s = codec::encode(&f, &CompressionParams::lossless(), None).unwrap();
        let r = codec::compression_ratio(&f, &s);
        assert!((0.9..=1.1).contains(&r), "{channels}ch ratio {r}");
        assert_eq!(codec::decode(s.as_bytes()).unwrap().samples(), f.samples());
    }
}

/// Byte range of tile `t`'s entropy-coded segment (after length and CRC).
fn tile_segment(bytes: &[u8], t: usize) -> std::ops::Range<usize> {
    let h = codec::peek_header(bytes).unwrap();
    let mut pos = h.payload_offset;
    for i in 0.. {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        if i == t {
            return pos + 8..pos + 8 + len;
        }
        pos += 8 + len;
    }
    unreachable!()
}

#[test]
fn flipped_payload_byte_is_confined_to_one_tile() {
    let f = generate(Scene::Chart, 192, 128, 3, 12, 8);
    let s = codec::encode(&f, &CompressionParams::lossless(), None).unwrap();
    let grid = s.header().unwrap().grid();
    assert_eq!(grid.len(), 6);
    for victim in [0, 4] {
        let mut bytes = s.as_bytes().to_vec();
        let seg = tile_segment(&bytes, victim);
        bytes[(seg.start + seg.end) / 2] ^= 0x10;
        assert!(matches!(codec::decode(&bytes), Err(CodecError::CorruptStream { ref tiles, .. }) if tiles == &vec![victim]));
        let lenient = decode_lenient(&bytes).unwrap();
        assert_eq!(lenient.corrupt_tiles, vec![victim]);
        let (x0, y0, tw, th) = grid.rect(victim);
        for y in 0..f.height() {
            for x in 0..f.width() {
                let inside = (x0..x0 + tw).contains(&x) && (y0..y0 + th).contains(&y);
                if !inside {
                    for c in 0..3 {
                        assert_eq!(lenient.frame.sample(x, y, c), f.sample(x, y, c));
                    }
                }
            }
        }
    }
}

#[test]
fn encoding_is_deterministic_across_pools() {
    let f = generate(Scene::FilmGrain, 200, 150, 3, 10, 1);
    let (_, map) = adaptix::analyze_frame(&f);
    let one = adaptix::par::with_workers(1, || codec::encode(&f, &CompressionParams::new(40.0), Some(&map)).unwrap());
    let four = adaptix::par::with_workers(4, || codec::encode(&f, &CompressionParams::new(40.0), Some(&map)).unwrap());
    assert_eq!(one, four);
    assert_eq!(one, codec::encode(&f, &CompressionParams::new(40.0), Some(&map)).unwrap());
}

#[test]
fn modulation_grid_must_match() {
    let f = generate(Scene::Gradient, 130, 70, 1, 10, 1);
    let p = CompressionParams::new(30.0).with_modulation(Grid::filled(2, 2, 1.0));
    assert!(matches!(codec::encode(&f, &p, None), Err(CodecError::ParamInvalid(_))));
    let p = CompressionParams::new(30.0).with_modulation(Grid::filled(3, 2, 9.0));
    assert!(matches!(codec::encode(&f, &p, None), Err(CodecError::ParamInvalid(_))));
    assert!(codec::encode(&f, &CompressionParams::new(30.0).with_modulation(Grid::filled(3, 2, 0.5)), None).is_ok());
}

#[test]
fn sensitivity_weight_protects_its_tile() {
    for scene in [Scene::FilmGrain, Scene::Text, Scene::Chart] {
        let f = generate(scene, 192, 128, 1, 10, 3);
        let mut map = SensitivityMap::uniform(192, 128);
        let target = 4;
        map.weights.values[target] = 4.0;
        let plain = codec::decode(codec::encode(&f, &CompressionParams::new(70.0), None).unwrap().as_bytes()).unwrap();
        let weighted =
            codec::decode(codec::encode(&f, &CompressionParams::new(70.0), Some(&map)).unwrap().as_bytes()).unwrap();
        let a = ssim(&f, &plain, &SsimParams::default()).unwrap().local_ssim_map.values[target].unwrap();
        let b = ssim(&f, &weighted, &SsimParams::default()).unwrap().local_ssim_map.values[target].unwrap();
        assert!(b >= a, "{scene:?}: weighted {b} < plain {a}");
    }
}

#[test]
fn lower_q_gives_higher_ssim() {
    for spec in acceptance_corpus().into_iter().step_by(3).take(10) {
        let f = spec.render();
        let at = |q: f64| {
            let d = codec::decode(codec::encode(&f, &CompressionParams::new(q), None).unwrap().as_bytes()).unwrap();
            ssim(&f, &d, &SsimParams::default()).unwrap().ssim
        };
        let (s30, s70) = (at(30.0), at(70.0));
        assert!(s30 > s70, "{}: {s30} vs {s70}", spec.name());
    }
}

#[test]
fn zero_q_is_lossless() {
    let f = generate(Scene::SoftGradient, 70, 50, 3, 16, 2);
    let s = codec::encode(&f, &CompressionParams::new(0.0), None).unwrap();
    assert!(s.header().unwrap().lossless);
    assert_eq!(codec::decode(s.as_bytes()).unwrap().samples(), f.samples());
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    (1usize..90, 1usize..90, prop_oneof![Just(1usize), Just(3usize)], prop_oneof![Just(10u8), Just(12), Just(16)], 0u8..3)
        .prop_flat_map(|(w, h, c, d, kind)| {
            let max = ((1u32 << d) - 1) as u16;
            proptest::collection::vec(0..=max, w * h * c).prop_map(move |mut s| {
                if kind == 1 {
                    // Smooth-ish content: running average keeps the coder's context paths busy.
                    for i in 1..s.len() {
                        s[i] = ((u32::from(s[i - 1]) * 15 + u32::from(s[i])) / 16) as u16;
                    }
                }
                Frame::new(w, h, c, d, s).unwrap()
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lossless_round_trip(f in arb_frame()) {
        let s = codec::encode(&f, &CompressionParams::lossless(), None).unwrap();
        let d = codec::decode(s.as_bytes()).unwrap();
        prop_assert_eq!(d.samples(), f.samples());
        prop_assert!(d.same_shape(&f));
    }

    #[test]
    fn lossy_decode_stays_in_range(f in arb_frame(), q in 1.0f64..100.0) {
        let s = codec::encode(&f, &CompressionParams::new(q), None).unwrap();
        let d = codec::decode(s.as_bytes()).unwrap();
        prop_assert!(d.same_shape(&f));
    }
}
