//! Integer lifting wavelets on tile buffers.
//!
//! Both filters are applied as integer-to-integer lifting with whole-sample
//! symmetric extension, so each is exactly invertible. The 9/7 filter omits
//! the final scaling step; its effect is folded into the subband gains of the
//! quantizer (see [`super::consts`]).

use super::consts::{LIFT_97_Q16, LIFT_SHIFT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    /// Reversible 5/3.
    Le53,
    /// Fixed-point 9/7.
    Cdf97,
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// One lifting pass: for every index with the given parity,
/// `x[i] += sign * f(x[i-1] + x[i+1])`.
#[inline]
fn lift(x: &mut [i32], parity: usize, f: impl Fn(i64) -> i64, inverse: bool) {
    let n = x.len();
    let mut i = parity;
    while i < n {
        let l = i64::from(x[mirror(i as isize - 1, n)]);
        let r = i64::from(x[mirror(i as isize + 1, n)]);
        let d = f(l + r);
        x[i] = if inverse { (i64::from(x[i]) - d) as i32 } else { (i64::from(x[i]) + d) as i32 };
        i += 2;
    }
}

#[inline]
fn q16(coef: i64) -> impl Fn(i64) -> i64 {
    move |s| (coef * s + (1 << (LIFT_SHIFT - 1))) >> LIFT_SHIFT
}

/// Forward 1-D transform in place; output is `[low..., high...]`.
pub fn forward_1d(x: &mut [i32], filter: Filter, scratch: &mut Vec<i32>) {
    let n = x.len();
    if n < 2 {
        return;
    }
    match filter {
        Filter::Le53 => {
            lift(x, 1, |s| -(s >> 1), false);
            lift(x, 0, |s| (s + 2) >> 2, false);
        }
        Filter::Cdf97 => {
            let [a, b, g, d] = LIFT_97_Q16;
            lift(x, 1, q16(a), false);
            lift(x, 0, q16(b), false);
            lift(x, 1, q16(g), false);
            lift(x, 0, q16(d), false);
        }
    }
    deinterleave(x, scratch);
}

pub fn inverse_1d(x: &mut [i32], filter: Filter, scratch: &mut Vec<i32>) {
    let n = x.len();
    if n < 2 {
        return;
    }
    interleave(x, scratch);
    match filter {
        Filter::Le53 => {
            lift(x, 0, |s| (s + 2) >> 2, true);
            lift(x, 1, |s| -(s >> 1), true);
        }
        Filter::Cdf97 => {
            let [a, b, g, d] = LIFT_97_Q16;
            lift(x, 0, q16(d), true);
            lift(x, 1, q16(g), true);
            lift(x, 0, q16(b), true);
            lift(x, 1, q16(a), true);
        }
    }
}

fn deinterleave(x: &mut [i32], scratch: &mut Vec<i32>) {
    let n = x.len();
    let nl = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(x);
    for i in 0..nl {
        x[i] = scratch[2 * i];
    }
    for i in 0..n / 2 {
        x[nl + i] = scratch[2 * i + 1];
    }
}

fn interleave(x: &mut [i32], scratch: &mut Vec<i32>) {
    let n = x.len();
    let nl = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(x);
    for i in 0..nl {
        x[2 * i] = scratch[i];
    }
    for i in 0..n / 2 {
        x[2 * i + 1] = scratch[nl + i];
    }
}

/// Sizes of the successive low-pass regions: entry `j` is the `(w, h)` of the
/// region transformed at level `j + 1`, plus a final entry for the LL band.
pub fn level_dims(w: usize, h: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(w, h)];
    let (mut cw, mut ch) = (w, h);
    for _ in 0..levels {
        if cw < 2 && ch < 2 {
            break;
        }
        cw = cw.div_ceil(2);
        ch = ch.div_ceil(2);
        dims.push((cw, ch));
    }
    dims
}

/// Forward 2-D transform of a `w`×`h` buffer (row stride `w`) over `levels`.
pub fn forward_2d(buf: &mut [i32], w: usize, h: usize, levels: usize, filter: Filter) {
    let dims = level_dims(w, h, levels);
    let mut line = Vec::with_capacity(w.max(h));
    let mut scratch = Vec::with_capacity(w.max(h));
    for &(cw, ch) in &dims[..dims.len() - 1] {
        if cw > 1 {
            for y in 0..ch {
                forward_1d(&mut buf[y * w..y * w + cw], filter, &mut scratch);
            }
        }
        if ch > 1 {
            for x in 0..cw {
                line.clear();
                line.extend((0..ch).map(|y| buf[y * w + x]));
                forward_1d(&mut line, filter, &mut scratch);
                for (y, &v) in line.iter().enumerate() {
                    buf[y * w + x] = v;
                }
            }
        }
    }
}

pub fn inverse_2d(buf: &mut [i32], w: usize, h: usize, levels: usize, filter: Filter) {
    let dims = level_dims(w, h, levels);
    let mut line = Vec::with_capacity(w.max(h));
    let mut scratch = Vec::with_capacity(w.max(h));
    for &(cw, ch) in dims[..dims.len() - 1].iter().rev() {
        if ch > 1 {
            for x in 0..cw {
                line.clear();
                line.extend((0..ch).map(|y| buf[y * w + x]));
                inverse_1d(&mut line, filter, &mut scratch);
                for (y, &v) in line.iter().enumerate() {
                    buf[y * w + x] = v;
                }
            }
        }
        if cw > 1 {
            for y in 0..ch {
                inverse_1d(&mut buf[y * w..y * w + cw], filter, &mut scratch);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Ll,
    Hl,
    Lh,
    Hh,
}

/// A rectangular subband inside a transformed tile buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub orientation: Orientation,
    /// Decomposition level (1 = finest); the LL band carries the deepest level.
    pub level: usize,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    /// Number of horizontal / vertical low-pass filterings the band's basis
    /// functions went through, and whether the last one was high-pass.
    pub h_lows: usize,
    pub h_high: bool,
    pub v_lows: usize,
    pub v_high: bool,
}

/// Bands in coding order: LL first, then coarse-to-fine HL, LH, HH.
pub fn bands(w: usize, h: usize, levels: usize) -> Vec<Band> {
    let dims = level_dims(w, h, levels);
    let depth = dims.len() - 1;
    // Count how many times each axis was actually filtered up to each level.
    let mut hx = vec![0usize; depth + 1];
    let mut vy = vec![0usize; depth + 1];
    for j in 1..=depth {
        let (pw, ph) = dims[j - 1];
        hx[j] = hx[j - 1] + usize::from(pw > 1);
        vy[j] = vy[j - 1] + usize::from(ph > 1);
    }
    let (lw, lh) = dims[depth];
    let mut out = vec![Band {
        orientation: Orientation::Ll,
        level: depth,
        x0: 0,
        y0: 0,
        w: lw,
        h: lh,
        h_lows: hx[depth],
        h_high: false,
        v_lows: vy[depth],
        v_high: false,
    }];
    for j in (1..=depth).rev() {
        let (pw, ph) = dims[j - 1];
        let (cw, ch) = dims[j];
        let candidates = [
            (Orientation::Hl, cw, 0, pw - cw, ch),
            (Orientation::Lh, 0, ch, cw, ph - ch),
            (Orientation::Hh, cw, ch, pw - cw, ph - ch),
        ];
        for (orientation, x0, y0, bw, bh) in candidates {
            if bw == 0 || bh == 0 {
                continue;
            }
            let h_high = matches!(orientation, Orientation::Hl | Orientation::Hh);
            let v_high = matches!(orientation, Orientation::Lh | Orientation::Hh);
            out.push(Band {
                orientation,
                level: j,
                x0,
                y0,
                w: bw,
                h: bh,
                h_lows: if h_high { hx[j - 1] } else { hx[j] },
                h_high,
                v_lows: if v_high { vy[j - 1] } else { vy[j] },
                v_high,
            });
        }
    }
    out
}
