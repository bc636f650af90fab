//! Objective quality metrics over high bit-depth frames.
//!
//! SSIM uses a Gaussian window evaluated at valid positions only (no edge
//! padding). The headline score is computed on a luma plane; per-channel
//! scores are reported alongside. All arithmetic is double precision.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::frame::Frame;
use crate::grid::{Grid, TileGrid};
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frames differ in shape or bit depth")]
    ShapeMismatch,
    #[error("frame {width}x{height} is smaller than the {window}-pixel window")]
    FrameTooSmall { width: usize, height: usize, window: usize },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(&'static str),
}

/// Peak signal-to-noise ratio in dB, with a distinct value for identical
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    pub fn to_tag_value(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => crate::formats::tiff::PSNR_INFINITE_TAG_VALUE,
        }
    }

    pub fn from_tag_value(v: f64) -> Self {
        if v >= crate::formats::tiff::PSNR_INFINITE_TAG_VALUE || v.is_infinite() {
            Psnr::Infinite
        } else {
            Psnr::Finite(v)
        }
    }

    pub fn meets(self, threshold_db: f64) -> bool {
        self.db() >= threshold_db
    }
}

impl PartialOrd for Psnr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.db().partial_cmp(&other.db())
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PsnrVisitor;
        impl Visitor<'_> for PsnrVisitor {
            type Value = Psnr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number of decibels or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Psnr, E> {
                Ok(Psnr::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Psnr, E> {
                Ok(Psnr::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Psnr, E> {
                Ok(Psnr::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Psnr, E> {
                match v {
                    "inf" => Ok(Psnr::Infinite),
                    other => other.parse().map(Psnr::Finite).map_err(E::custom),
                }
            }
        }
        d.deserialize_any(PsnrVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub luma_weights: [f64; 3],
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 11, gaussian_sigma: 1.5, k1: 0.01, k2: 0.03, luma_weights: [0.2126, 0.7152, 0.0722] }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(MetricsError::InvalidParams("window must be odd and at least 3"));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(MetricsError::InvalidParams("k1 and k2 must be positive"));
        }
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 {
            return Err(MetricsError::InvalidParams("gaussian sigma must be positive"));
        }
        if (self.luma_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MetricsError::InvalidParams("luma weights must sum to 1"));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-(d * d) / (2.0 * self.gaussian_sigma * self.gaussian_sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub ssim: f64,
    pub psnr: Psnr,
    pub per_channel_ssim: Vec<f64>,
    /// Mean SSIM of the windows centred in each tile; `None` for tiles that
    /// contain no valid window centre.
    pub local_ssim_map: Grid<Option<f64>>,
}

impl QualityScore {
    pub fn min_local_ssim(&self) -> Option<f64> {
        self.local_ssim_map.values.iter().flatten().copied().reduce(f64::min)
    }
}

/// `10·log10(MAX² / MSE)` over all samples of all channels.
pub fn psnr(reference: &Frame, test: &Frame) -> Result<Psnr, MetricsError> {
    if !reference.same_shape(test) {
        return Err(MetricsError::ShapeMismatch);
    }
    let sse: u128 = reference
        .samples()
        .iter()
        .zip(test.samples())
        .map(|(&a, &b)| {
            let d = i64::from(a) - i64::from(b);
            (d * d) as u128
        })
        .sum();
    if sse == 0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sse as f64 / reference.samples().len() as f64;
    let max = f64::from(reference.max_value());
    Ok(Psnr::Finite(10.0 * (max * max / mse).log10()))
}

/// Luma plane (identity for single-channel frames).
pub fn luma_plane(frame: &Frame, weights: [f64; 3]) -> Vec<f64> {
    if frame.channels() == 1 {
        return frame.samples().iter().map(|&v| f64::from(v)).collect();
    }
    frame
        .samples()
        .chunks_exact(3)
        .map(|p| weights[0] * f64::from(p[0]) + weights[1] * f64::from(p[1]) + weights[2] * f64::from(p[2]))
        .collect()
}

pub fn channel_plane(frame: &Frame, channel: usize) -> Vec<f64> {
    frame.samples().iter().skip(channel).step_by(frame.channels()).map(|&v| f64::from(v)).collect()
}

/// SSIM with the local map laid out on the codec's default tile grid.
pub fn ssim(reference: &Frame, test: &Frame, params: &SsimParams) -> Result<QualityScore, MetricsError> {
    ssim_tiled(reference, test, params, crate::codec::TILE_SIZE)
}

pub fn ssim_tiled(
    reference: &Frame,
    test: &Frame,
    params: &SsimParams,
    tile_size: usize,
) -> Result<QualityScore, MetricsError> {
    params.validate()?;
    if !reference.same_shape(test) {
        return Err(MetricsError::ShapeMismatch);
    }
    let (w, h) = (reference.width(), reference.height());
    if w.min(h) < params.window {
        return Err(MetricsError::FrameTooSmall { width: w, height: h, window: params.window });
    }
    let peak = f64::from(reference.max_value());
    let grid = TileGrid::new(w, h, tile_size);

    let luma_ref = luma_plane(reference, params.luma_weights);
    let luma_test = luma_plane(test, params.luma_weights);
    let luma = ssim_plane(&luma_ref, &luma_test, w, h, peak, params, &grid);

    let per_channel_ssim = if reference.channels() == 1 {
        vec![luma.mean()]
    } else {
        (0..reference.channels())
            .map(|c| {
                let a = channel_plane(reference, c);
                let b = channel_plane(test, c);
                ssim_plane(&a, &b, w, h, peak, params, &grid).mean()
            })
            .collect()
    };

    let local = luma
        .tile_sums
        .iter()
        .zip(&luma.tile_counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(QualityScore {
        ssim: luma.mean(),
        psnr: psnr(reference, test)?,
        per_channel_ssim,
        local_ssim_map: Grid { cols: grid.cols(), rows: grid.rows(), values: local },
    })
}

struct PlaneSsim {
    sum: f64,
    count: u64,
    tile_sums: Vec<f64>,
    tile_counts: Vec<u64>,
}

impl PlaneSsim {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

/// Output rows handled by one work unit. Fixed, so the summation order (and
/// hence the result) does not depend on the thread count.
const ROW_BAND: usize = 32;

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, peak: f64, params: &SsimParams, grid: &TileGrid) -> PlaneSsim {
    let kernel = params.kernel();
    let win = params.window;
    let half = win / 2;
    let c1 = (params.k1 * peak).powi(2);
    let c2 = (params.k2 * peak).powi(2);
    let out_w = w - win + 1;
    let out_h = h - win + 1;
    let bands = out_h.div_ceil(ROW_BAND);

    let partials = par::map_range(bands, |band| {
        let oy0 = band * ROW_BAND;
        let oy1 = (oy0 + ROW_BAND).min(out_h);
        let in_rows = oy1 - oy0 + win - 1;
        // Horizontal pass over the rows this band needs: mu_a, mu_b, aa, bb, ab.
        let mut hp = vec![[0.0f64; 5]; in_rows * out_w];
        for r in 0..in_rows {
            let row = (oy0 + r) * w;
            for ox in 0..out_w {
                let mut acc = [0.0f64; 5];
                for (k, &g) in kernel.iter().enumerate() {
                    let x = a[row + ox + k];
                    let y = b[row + ox + k];
                    acc[0] += g * x;
                    acc[1] += g * y;
                    acc[2] += g * (x * x);
                    acc[3] += g * (y * y);
                    acc[4] += g * (x * y);
                }
                hp[r * out_w + ox] = acc;
            }
        }
        let mut sum = 0.0;
        let mut tile_sums = vec![0.0; grid.len()];
        let mut tile_counts = vec![0u64; grid.len()];
        for oy in oy0..oy1 {
            let r0 = oy - oy0;
            for ox in 0..out_w {
                let mut m = [0.0f64; 5];
                for (k, &g) in kernel.iter().enumerate() {
                    let v = &hp[(r0 + k) * out_w + ox];
                    for i in 0..5 {
                        m[i] += g * v[i];
                    }
                }
                let s = window_ssim(m, c1, c2);
                sum += s;
                let t = grid.tile_of(ox + half, oy + half);
                tile_sums[t] += s;
                tile_counts[t] += 1;
            }
        }
        PlaneSsim { sum, count: ((oy1 - oy0) * out_w) as u64, tile_sums, tile_counts }
    });

    let mut total = PlaneSsim { sum: 0.0, count: 0, tile_sums: vec![0.0; grid.len()], tile_counts: vec![0; grid.len()] };
    for p in partials {
        total.sum += p.sum;
        total.count += p.count;
        for (t, (s, n)) in p.tile_sums.iter().zip(&p.tile_counts).enumerate() {
            total.tile_sums[t] += s;
            total.tile_counts[t] += n;
        }
    }
    total
}

/// SSIM of one window from its weighted moments `[mu_a, mu_b, E[a²], E[b²], E[ab]]`.
#[inline]
fn window_ssim(m: [f64; 5], c1: f64, c2: f64) -> f64 {
    let (mu_a, mu_b) = (m[0], m[1]);
    let var_a = m[2] - mu_a * mu_a;
    let var_b = m[3] - mu_b * mu_b;
    let cov = m[4] - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}
