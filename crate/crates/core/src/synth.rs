//! Deterministic synthetic test frames: smooth gradients, film grain,
//! high-contrast charts, text overlays and incompressible noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frame::{ColorSpace, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    /// Low-frequency gradient with no noise.
    Gradient,
    /// Low-frequency gradient plus Gaussian noise of about 1 LSB (10-bit).
    SoftGradient,
    /// Mid-frequency content under strong Gaussian grain.
    FilmGrain,
    /// Flat patches with hard edges spanning most of the range.
    Chart,
    /// Gradient background with thin bright strokes.
    Text,
    /// Uniform i.i.d. samples over the full range.
    Noise,
}

impl Scene {
    pub fn as_str(self) -> &'static str {
        match self {
            Scene::Gradient => "gradient",
            Scene::SoftGradient => "soft_gradient",
            Scene::FilmGrain => "film_grain",
            Scene::Chart => "chart",
            Scene::Text => "text",
            Scene::Noise => "noise",
        }
    }

    /// Gradient-like content the compression-regime check runs on.
    pub fn is_smooth(self) -> bool {
        matches!(self, Scene::Gradient | Scene::SoftGradient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene: Scene,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub seed: u64,
}

impl SceneSpec {
    pub fn name(&self) -> String {
        format!(
            "{}_{}x{}x{}_{}bit_s{}",
            self.scene.as_str(),
            self.width,
            self.height,
            self.channels,
            self.bit_depth,
            self.seed
        )
    }

    pub fn render(&self) -> Frame {
        generate(self.scene, self.width, self.height, self.channels, self.bit_depth, self.seed)
    }
}

/// Values in `[0, 1]` scaled to the depth's full range and rounded.
fn to_frame(unit: Vec<f64>, width: usize, height: usize, channels: usize, bit_depth: u8) -> Frame {
    let max = f64::from((1u32 << bit_depth) - 1);
    let samples = unit.into_iter().map(|v| (v.clamp(0.0, 1.0) * max).round() as u16).collect();
    let cs = if channels == 1 { ColorSpace::Gray } else { ColorSpace::Log };
    Frame::new(width, height, channels, bit_depth, samples).expect("generated samples are in range").with_color_space(cs)
}

/// A smooth field built from a few long-wavelength cosines.
struct SmoothField {
    base: f64,
    terms: Vec<(f64, f64, f64, f64)>,
    tilt: (f64, f64),
}

impl SmoothField {
    fn random(rng: &mut ChaCha8Rng, width: usize, height: usize, amplitude: f64) -> Self {
        let terms = (0..3)
            .map(|_| {
                let fx = rng.random_range(0.2..1.5) / width as f64;
                let fy = rng.random_range(0.2..1.5) / height as f64;
                (fx, fy, rng.random_range(0.0..TAU), amplitude * rng.random_range(0.3..1.0) / 3.0)
            })
            .collect();
        SmoothField {
            base: rng.random_range(0.35..0.65),
            terms,
            tilt: (rng.random_range(-0.2..0.2) / width as f64, rng.random_range(-0.2..0.2) / height as f64),
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (x, y) = (x as f64, y as f64);
        let waves: f64 = self.terms.iter().map(|&(fx, fy, ph, a)| a * (TAU * (fx * x + fy * y) + ph).cos()).sum();
        self.base + self.tilt.0 * x + self.tilt.1 * y + waves
    }
}

pub fn generate(scene: Scene, width: usize, height: usize, channels: usize, bit_depth: u8, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (scene as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let max = f64::from((1u32 << bit_depth) - 1);
    let lsb10 = 1.0 / 1023.0;
    let n = width * height * channels;
    let fields: Vec<SmoothField> = (0..channels).map(|_| SmoothField::random(&mut rng, width, height, 0.5)).collect();
    let smooth = |x: usize, y: usize, c: usize| fields[c].at(x, y);

    let unit = match scene {
        Scene::Gradient | Scene::SoftGradient => {
            let sigma: f64 = if scene == Scene::SoftGradient { lsb10 } else { 0.0 };
            let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
            let mut out = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    for c in 0..channels {
                        let g = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        out.push(smooth(x, y, c) + g);
                    }
                }
            }
            out
        }
        Scene::FilmGrain => {
            let sigma = rng.random_range(4.0..8.0) * lsb10;
            let grain = Normal::new(0.0, sigma).unwrap();
            let detail_f = rng.random_range(4.0..10.0) / width.max(height) as f64;
            let mut out = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let detail = 0.08 * (TAU * detail_f * x as f64).sin() * (TAU * detail_f * y as f64).cos();
                    // Grain is shared across channels, as on a monochrome emulsion layer.
                    let g = grain.sample(&mut rng);
                    for c in 0..channels {
                        out.push(smooth(x, y, c) + detail + g);
                    }
                }
            }
            out
        }
        Scene::Chart => {
            let patch = [16usize, 24, 32][rng.random_range(0..3)];
            let cols = width.div_ceil(patch);
            let levels: Vec<f64> = (0..cols * height.div_ceil(patch) * channels).map(|_| rng.random_range(0.05..0.95)).collect();
            let mut out = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let p = (y / patch) * cols + x / patch;
                    for c in 0..channels {
                        out.push(levels[p * channels + c]);
                    }
                }
            }
            out
        }
        Scene::Text => {
            let mut out: Vec<f64> = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    for c in 0..channels {
                        out.push(0.6 * smooth(x, y, c));
                    }
                }
            }
            // Lines of "glyphs": short horizontal and vertical strokes.
            let line_h = 16;
            let mut ty = 8;
            while ty + line_h < height {
                let mut tx = 8;
                while tx + 8 < width {
                    for _ in 0..3 {
                        let vertical = rng.random_bool(0.5);
                        let (sx, sy) = (tx + rng.random_range(0..6), ty + rng.random_range(0..10));
                        let len = rng.random_range(3..8);
                        for k in 0..len {
                            let (px, py) = if vertical { (sx, sy + k) } else { (sx + k, sy) };
                            for t in 0..2 {
                                let (qx, qy) = if vertical { (px + t, py) } else { (px, py + t) };
                                if qx < width && qy < height {
                                    for c in 0..channels {
                                        out[(qy * width + qx) * channels + c] = 0.95;
                                    }
                                }
                            }
                        }
                    }
                    tx += 10;
                }
                ty += line_h + 8;
            }
            out
        }
        Scene::Noise => {
            let samples = (0..n).map(|_| rng.random_range(0..=max as u32) as u16).collect();
            let cs = if channels == 1 { ColorSpace::Gray } else { ColorSpace::Log };
            return Frame::new(width, height, channels, bit_depth, samples).unwrap().with_color_space(cs);
        }
    };
    to_frame(unit, width, height, channels, bit_depth)
}

/// The 32-frame acceptance corpus: 16 smooth frames (gradients with and
/// without mild noise) followed by 16 harder ones (grain, charts, text).
pub fn acceptance_corpus() -> Vec<SceneSpec> {
    let mut specs = Vec::with_capacity(32);
    let shapes = [(256, 192, 1, 10), (192, 256, 3, 10), (256, 256, 3, 12), (320, 192, 1, 16)];
    for i in 0..16u64 {
        let (width, height, channels, bit_depth) = shapes[i as usize % shapes.len()];
        let scene = if i % 2 == 0 { Scene::Gradient } else { Scene::SoftGradient };
        specs.push(SceneSpec { scene, width, height, channels, bit_depth, seed: 100 + i });
    }
    let hard = [Scene::FilmGrain, Scene::Chart, Scene::Text];
    for i in 0..16u64 {
        let (width, height, channels, bit_depth) = shapes[(i as usize + 1) % shapes.len()];
        specs.push(SceneSpec { scene: hard[i as usize % 3], width, height, channels, bit_depth, seed: 200 + i });
    }
    specs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for scene in [Scene::Gradient, Scene::SoftGradient, Scene::FilmGrain, Scene::Chart, Scene::Text, Scene::Noise] {
            let a = generate(scene, 40, 30, 3, 12, 7);
            let b = generate(scene, 40, 30, 3, 12, 7);
            assert_eq!(a, b);
            assert_ne!(a, generate(scene, 40, 30, 3, 12, 8), "{scene:?}");
        }
    }

    #[test]
    fn corpus_shape() {
        let c = acceptance_corpus();
        assert_eq!(c.len(), 32);
        assert_eq!(c.iter().filter(|s| s.scene.is_smooth()).count(), 16);
    }
}
