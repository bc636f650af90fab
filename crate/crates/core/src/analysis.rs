//! Frame statistics and the per-tile sensitivity map that steers bit
//! allocation.
//!
//! Everything here runs on an integer luma plane so results are bit-for-bit
//! reproducible. Gradient energies are expressed in 8-bit-equivalent LSBs
//! (native LSBs divided by `2^(depth - 8)`) so one threshold serves every
//! bit depth.

use serde::{Deserialize, Serialize};

use crate::codec::TILE_SIZE;
use crate::frame::Frame;
use crate::grid::{Grid, TileGrid};
use crate::par;

/// Rec.709 luma weights in Q16, summing to exactly 65536.
pub const LUMA_WEIGHTS_Q16: [u32; 3] = [13_933, 46_871, 4_732];

/// Percentiles (in per mille) bounding the reported dynamic range.
pub const RANGE_PER_MILLE: (u64, u64) = (1, 999);

/// Consistency constant turning a MAD into a Gaussian standard deviation.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Expected tile gradient energy per unit of i.i.d. Gaussian noise sigma:
/// `2 · E|N(0, 12)| / 8 = sqrt(24 / pi) / 4`.
pub const NOISE_ENERGY_PER_SIGMA: f64 = 0.690_988_298_942_670_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Gradient energy below which a tile counts as smooth (8-bit LSB).
    pub tau_gradient: f64,
    /// Minimum tile value spread, as a fraction of full scale, for a smooth
    /// tile to carry banding risk.
    pub tau_spread: f64,
    /// A tile is noise-dominated when its gradient energy is below this many
    /// times the energy that the estimated noise alone would produce.
    pub noisy_factor: f64,
    /// Tiles whose energy exceeds this quantile of all tile energies are
    /// flagged as high texture.
    pub texture_quantile: f64,
    pub smooth_multiplier: f64,
    pub texture_multiplier: f64,
    pub noisy_multiplier: f64,
    pub weight_min: f64,
    pub weight_max: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tau_gradient: 1.0,
            tau_spread: 0.05,
            noisy_factor: 3.0,
            texture_quantile: 0.9,
            smooth_multiplier: 2.0,
            texture_multiplier: 1.5,
            noisy_multiplier: 0.5,
            weight_min: 0.25,
            weight_max: 4.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tau_gradient", self.tau_gradient),
            ("noisy_factor", self.noisy_factor),
            ("smooth_multiplier", self.smooth_multiplier),
            ("texture_multiplier", self.texture_multiplier),
            ("noisy_multiplier", self.noisy_multiplier),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("{name} must be a positive number"));
        }
        if !(0.0..=1.0).contains(&self.tau_spread) {
            return Err("tau_spread must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.texture_quantile) {
            return Err("texture_quantile must lie in [0, 1]".into());
        }
        if !(0.25 <= self.weight_min && self.weight_min <= self.weight_max && self.weight_max <= 4.0) {
            return Err("weight bounds must satisfy 0.25 <= weight_min <= weight_max <= 4".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    /// Luma values at the low and high range percentiles.
    pub dynamic_range: (u32, u32),
    pub contrast_index: f64,
    /// Estimated noise standard deviation in native LSBs.
    pub noise_sigma: f64,
    pub banding_risk: bool,
    pub palette_saturation: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileFlags {
    pub smooth_gradient: bool,
    pub high_texture: bool,
    pub noisy: bool,
}

impl TileFlags {
    pub fn is_empty(&self) -> bool {
        !(self.smooth_gradient || self.high_texture || self.noisy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub tile_size: usize,
    pub weights: Grid<f64>,
    pub flags: Grid<TileFlags>,
    /// Mean Sobel response per tile, 8-bit-equivalent LSB.
    pub gradient_energy: Grid<f64>,
    /// Max minus min luma per tile, native LSB.
    pub spread: Grid<u32>,
}

impl SensitivityMap {
    /// Weight 1.0 everywhere, no flags.
    pub fn uniform(width: usize, height: usize) -> Self {
        let g = TileGrid::new(width, height, TILE_SIZE);
        let (cols, rows) = (g.cols(), g.rows());
        SensitivityMap {
            tile_size: TILE_SIZE,
            weights: Grid::filled(cols, rows, 1.0),
            flags: Grid::filled(cols, rows, TileFlags::default()),
            gradient_energy: Grid::filled(cols, rows, 0.0),
            spread: Grid::filled(cols, rows, 0),
        }
    }

    pub fn matches(&self, frame: &Frame) -> bool {
        let g = TileGrid::new(frame.width(), frame.height(), self.tile_size);
        self.weights.matches(&g) && self.flags.matches(&g)
    }
}

/// Integer luma: `(13933 R + 46871 G + 4732 B + 2^15) >> 16`, identity for
/// single-channel frames.
pub fn integer_luma(frame: &Frame) -> Vec<u32> {
    if frame.channels() == 1 {
        return frame.samples().iter().map(|&v| u32::from(v)).collect();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS_Q16.map(u64::from);
    frame
        .samples()
        .chunks_exact(3)
        .map(|p| ((wr * u64::from(p[0]) + wg * u64::from(p[1]) + wb * u64::from(p[2]) + (1 << 15)) >> 16) as u32)
        .collect()
}

/// Nearest-rank quantile of a histogram: the smallest value whose
/// cumulative count reaches `ceil(per_mille · n / 1000)`.
fn histogram_percentile(hist: &[u64], n: u64, per_mille: u64) -> u32 {
    let rank = (per_mille * n).div_ceil(1000).clamp(1, n);
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= rank {
            return v as u32;
        }
    }
    (hist.len() - 1) as u32
}

fn median_of(values: &mut [i64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable(mid);
    if n % 2 == 1 {
        upper as f64
    } else {
        let lower = *values[..mid].iter().max().unwrap();
        (lower + upper) as f64 / 2.0
    }
}

/// `1.4826 · MAD(L) / sqrt(20)` with `L` the 4-neighbour Laplacian over
/// interior pixels. Zero for frames without an interior.
pub fn estimate_noise_sigma(luma: &[u32], width: usize, height: usize) -> f64 {
    if width < 3 || height < 3 {
        return 0.0;
    }
    let mut lap = Vec::with_capacity((width - 2) * (height - 2));
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            let c = i64::from(luma[i]);
            let s = i64::from(luma[i - 1]) + i64::from(luma[i + 1]) + i64::from(luma[i - width]) + i64::from(luma[i + width]);
            lap.push(4 * c - s);
        }
    }
    let med = median_of(&mut lap);
    // Absolute deviations doubled so they stay integral when the median is a half.
    let med2 = (2.0 * med) as i64;
    let mut dev: Vec<i64> = lap.iter().map(|&v| (2 * v - med2).abs()).collect();
    let mad = median_of(&mut dev) / 2.0;
    MAD_TO_SIGMA * mad / 20f64.sqrt()
}

/// Per-pixel `|Gx| + |Gy|` of the 3×3 Sobel operator with replicated borders.
fn sobel_sum(luma: &[u32], width: usize, height: usize, y: usize) -> Vec<u32> {
    let row = |yy: isize| -> &[u32] {
        let yy = yy.clamp(0, height as isize - 1) as usize;
        &luma[yy * width..(yy + 1) * width]
    };
    let (up, mid, down) = (row(y as isize - 1), row(y as isize), row(y as isize + 1));
    let at = |r: &[u32], x: isize| i64::from(r[x.clamp(0, width as isize - 1) as usize]);
    (0..width as isize)
        .map(|x| {
            let gx = at(up, x + 1) + 2 * at(mid, x + 1) + at(down, x + 1) - at(up, x - 1) - 2 * at(mid, x - 1) - at(down, x - 1);
            let gy = at(down, x - 1) + 2 * at(down, x) + at(down, x + 1) - at(up, x - 1) - 2 * at(up, x) - at(up, x + 1);
            (gx.abs() + gy.abs()) as u32
        })
        .collect()
}

struct TileStats {
    energy: f64,
    spread: u32,
}

fn tile_stats(luma: &[u32], frame: &Frame, grid: &TileGrid) -> Vec<TileStats> {
    let (w, h) = (frame.width(), frame.height());
    // Sobel sums reach 8·(2^16 − 1) per axis; per-pixel energy is sum / 8.
    let depth_scale = 8.0 * 2f64.powi(i32::from(frame.bit_depth()) - 8);
    par::map_range(grid.rows(), |ty| {
        let y0 = ty * grid.tile_size;
        let y1 = (y0 + grid.tile_size).min(h);
        let mut sums = vec![0u64; grid.cols()];
        let mut mins = vec![u32::MAX; grid.cols()];
        let mut maxs = vec![0u32; grid.cols()];
        for y in y0..y1 {
            let sob = sobel_sum(luma, w, h, y);
            for x in 0..w {
                let t = x / grid.tile_size;
                sums[t] += u64::from(sob[x]);
                let v = luma[y * w + x];
                mins[t] = mins[t].min(v);
                maxs[t] = maxs[t].max(v);
            }
        }
        (0..grid.cols())
            .map(|tx| {
                let (_, _, tw, th) = grid.rect(ty * grid.cols() + tx);
                TileStats { energy: sums[tx] as f64 / (tw * th) as f64 / depth_scale, spread: maxs[tx] - mins[tx] }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Nearest-rank quantile of unsorted values.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn analyze_frame(frame: &Frame) -> (FrameStats, SensitivityMap) {
    analyze_frame_with(frame, &AnalysisConfig::default())
}

pub fn analyze_frame_with(frame: &Frame, config: &AnalysisConfig) -> (FrameStats, SensitivityMap) {
    let (w, h) = (frame.width(), frame.height());
    let luma = integer_luma(frame);
    let full_scale = frame.max_value();

    let mut hist = vec![0u64; full_scale as usize + 1];
    for &v in &luma {
        hist[v as usize] += 1;
    }
    let n = luma.len() as u64;
    let low = histogram_percentile(&hist, n, RANGE_PER_MILLE.0);
    let high = histogram_percentile(&hist, n, RANGE_PER_MILLE.1);
    let noise_sigma = estimate_noise_sigma(&luma, w, h);

    let palette_saturation = if frame.channels() == 3 {
        let total: u64 = frame
            .samples()
            .chunks_exact(3)
            .map(|p| u64::from(p.iter().max().unwrap() - p.iter().min().unwrap()))
            .sum();
        total as f64 / (n as f64 * f64::from(full_scale))
    } else {
        0.0
    };

    let grid = TileGrid::new(w, h, TILE_SIZE);
    let tiles = tile_stats(&luma, frame, &grid);
    let energies: Vec<f64> = tiles.iter().map(|t| t.energy).collect();
    let texture_cut = quantile(&energies, config.texture_quantile);
    let noise_energy = NOISE_ENERGY_PER_SIGMA * noise_sigma / 2f64.powi(i32::from(frame.bit_depth()) - 8);
    let spread_min = config.tau_spread * f64::from(full_scale);

    let mut flags = Vec::with_capacity(tiles.len());
    let mut weights = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let f = TileFlags {
            smooth_gradient: t.energy < config.tau_gradient && f64::from(t.spread) > spread_min,
            high_texture: t.energy > texture_cut,
            noisy: noise_sigma > 0.0 && t.energy < config.noisy_factor * noise_energy,
        };
        let mut weight = 1.0;
        if f.smooth_gradient {
            weight *= config.smooth_multiplier;
        }
        if f.high_texture {
            weight *= config.texture_multiplier;
        }
        if f.noisy {
            weight *= config.noisy_multiplier;
        }
        weights.push(weight.clamp(config.weight_min, config.weight_max));
        flags.push(f);
    }

    let (cols, rows) = (grid.cols(), grid.rows());
    let stats = FrameStats {
        dynamic_range: (low, high),
        contrast_index: f64::from(high - low) / f64::from(full_scale),
        noise_sigma,
        banding_risk: flags.iter().any(|f| f.smooth_gradient),
        palette_saturation,
    };
    let map = SensitivityMap {
        tile_size: TILE_SIZE,
        weights: Grid { cols, rows, values: weights },
        flags: Grid { cols, rows, values: flags },
        gradient_energy: Grid { cols, rows, values: energies },
        spread: Grid { cols, rows, values: tiles.iter().map(|t| t.spread).collect() },
    };
    (stats, map)
}
