//! Deadzone scalar quantization in Q16 fixed point.
//!
//! AC bands use a deadzone quantizer whose zero bin is two steps wide; the
//! LL band uses plain rounding. Reconstruction places values at the centre
//! of the integer range covered by each bin.

use super::consts::{INV_HIGH_NORM_Q16, INV_LOW_NORM_Q16, LIFT_SHIFT, Q16_ONE};
use super::wavelet::{Band, Orientation};

/// Quantizer step (Q16) for a band, given the tile's base step (Q16).
///
/// The band gain is the reciprocal L2 norm of the band's synthesis basis,
/// which equalizes the pixel-domain error contributed by every band.
pub fn band_step_q16(tile_step_q16: u32, band: &Band) -> u64 {
    let inv = |lows: usize, high: bool| -> u64 {
        if high {
            u64::from(INV_HIGH_NORM_Q16[lows + 1])
        } else {
            u64::from(INV_LOW_NORM_Q16[lows])
        }
    };
    let half = 1u64 << (LIFT_SHIFT - 1);
    let gain = (inv(band.h_lows, band.h_high) * inv(band.v_lows, band.v_high) + half) >> LIFT_SHIFT;
    let step = (u64::from(tile_step_q16) * gain + half) >> LIFT_SHIFT;
    step.max(u64::from(Q16_ONE))
}

#[inline]
pub fn quantize(c: i32, step_q16: u64, orientation: Orientation) -> i32 {
    let mag = u64::from(c.unsigned_abs()) << LIFT_SHIFT;
    let q = match orientation {
        Orientation::Ll => (mag + step_q16 / 2) / step_q16,
        _ => mag / step_q16,
    } as i32;
    if c < 0 {
        -q
    } else {
        q
    }
}

#[inline]
pub fn dequantize(q: i32, step_q16: u64, orientation: Orientation) -> i32 {
    if q == 0 {
        return 0;
    }
    let m = u64::from(q.unsigned_abs());
    let mag = match orientation {
        Orientation::Ll => (m * step_q16 + (1 << (LIFT_SHIFT - 1))) >> LIFT_SHIFT,
        _ => {
            // Centre of the integers in [m·step, (m+1)·step).
            let num = (2 * m + 1) * step_q16 - u64::from(Q16_ONE);
            (num + u64::from(Q16_ONE)) >> (LIFT_SHIFT + 1)
        }
    } as i32;
    if q < 0 {
        -mag
    } else {
        mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_step_is_identity() {
        for orientation in [Orientation::Ll, Orientation::Hh] {
            for c in -300..300 {
                let q = quantize(c, u64::from(Q16_ONE), orientation);
                assert_eq!(dequantize(q, u64::from(Q16_ONE), orientation), c);
            }
        }
    }

    #[test]
    fn deadzone_is_two_steps_wide() {
        let step = 10u64 << 16;
        for c in -9..=9 {
            assert_eq!(quantize(c, step, Orientation::Hl), 0);
        }
        assert_eq!(quantize(10, step, Orientation::Hl), 1);
        assert_eq!(quantize(-10, step, Orientation::Hl), -1);
        // Bin [10, 20) reconstructs at the middle of 10..=19.
        assert_eq!(dequantize(1, step, Orientation::Hl), 15);
        assert_eq!(quantize(5, step, Orientation::Ll), 1);
        assert_eq!(dequantize(1, step, Orientation::Ll), 10);
    }

    #[test]
    fn error_is_bounded_by_step() {
        let step = (37u64 << 16) + 12_345;
        for c in -5000..5000 {
            for o in [Orientation::Ll, Orientation::Lh] {
                let r = dequantize(quantize(c, step, o), step, o);
                let bound = if o == Orientation::Ll { step as f64 / 65536.0 / 2.0 + 1.0 } else { step as f64 / 65536.0 };
                assert!(((r - c) as f64).abs() <= bound, "c={c} r={r} {o:?}");
            }
        }
    }
}
