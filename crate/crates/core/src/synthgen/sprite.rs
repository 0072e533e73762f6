//! Procedural sprites: smooth random textures masked by star-convex shapes.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Purpose};
use super::transform::Point;
use super::GenerationError;
use crate::imaging::{dequantize, quantize, CodedImage};

/// 8-bit color raster with an 8-bit alpha channel. Pixel `(i, j)` has its
/// center at `(i + 0.5, j + 0.5)` in sprite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    color: CodedImage,
    alpha: Vec<u8>,
}

impl Sprite {
    pub fn new(color: CodedImage, alpha: Vec<u8>) -> Result<Self, GenerationError> {
        if alpha.len() != color.width() * color.height() {
            return Err(GenerationError::InvalidScene(
                "alpha plane does not match sprite size".into(),
            ));
        }
        Ok(Self { color, alpha })
    }

    /// Fully opaque sprite.
    pub fn opaque(color: CodedImage) -> Self {
        let alpha = vec![255; color.width() * color.height()];
        Self { color, alpha }
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn color(&self) -> &CodedImage {
        &self.color
    }

    pub fn alpha(&self) -> &[u8] {
        &self.alpha
    }

    pub fn is_opaque(&self) -> bool {
        self.alpha.iter().all(|&a| a == 255)
    }

    /// Bilinear alpha; taps outside the raster count as transparent.
    #[inline]
    pub fn alpha_at(&self, p: Point) -> f32 {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let fx = p[0] - 0.5;
        let fy = p[1] - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        if x0 < -1.0 || y0 < -1.0 || x0 >= w as f64 || y0 >= h as f64 {
            return 0.0;
        }
        let ax = (fx - x0) as f32;
        let ay = (fy - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |x: i64, y: i64| -> f32 {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                dequantize(self.alpha[(y * w + x) as usize])
            }
        };
        let top = tap(x0, y0) * (1.0 - ax) + tap(x0 + 1, y0) * ax;
        let bottom = tap(x0, y0 + 1) * (1.0 - ax) + tap(x0 + 1, y0 + 1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// Bilinear color with taps clamped to the border.
    #[inline]
    pub fn color_at(&self, p: Point) -> [f32; 3] {
        let (w, h) = (self.width(), self.height());
        let fx = p[0] - 0.5;
        let fy = p[1] - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = (fx - x0) as f32;
        let ay = (fy - y0) as f32;
        let cx = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
        let cy = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
        let (xa, xb, ya, yb) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
        let px = |x: usize, y: usize| self.color.pixel(x, y).map(dequantize);
        let (p00, p10, p01, p11) = (px(xa, ya), px(xb, ya), px(xa, yb), px(xb, yb));
        std::array::from_fn(|c| {
            let top = p00[c] * (1.0 - ax) + p10[c] * ax;
            let bottom = p01[c] * (1.0 - ax) + p11[c] * ax;
            top * (1.0 - ay) + bottom * ay
        })
    }
}

/// How a sprite was produced; enough to rebuild it bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpriteSource {
    Procedural {
        seed: u64,
        size: usize,
    },
    Background {
        seed: u64,
        width: usize,
        height: usize,
        wavelength: [f64; 2],
    },
    /// Supplied directly by the caller; cannot be regenerated from a manifest.
    Custom,
}

impl SpriteSource {
    pub fn build(&self) -> Result<Sprite, GenerationError> {
        match *self {
            SpriteSource::Procedural { seed, size } => procedural_sprite(seed, size),
            SpriteSource::Background {
                seed,
                width,
                height,
                wavelength,
            } => procedural_background(seed, width, height, wavelength),
            SpriteSource::Custom => Err(GenerationError::InvalidScene(
                "custom sprites cannot be rebuilt from a manifest".into(),
            )),
        }
    }
}

struct Wave {
    direction: [f64; 2],
    frequency: f64,
    phase: f64,
    amplitude: [f64; 3],
}

/// Sum of random plane waves around a random base color.
fn texture(rng: &mut ChaCha8Rng, width: usize, height: usize, wavelength: [f64; 2]) -> CodedImage {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let (lo, hi) = (
        wavelength[0].ln(),
        wavelength[1].max(wavelength[0] * 1.01).ln(),
    );
    let waves: Vec<Wave> = (0..8)
        .map(|_| {
            let angle = rng.random_range(0.0..TAU);
            Wave {
                direction: [angle.cos(), angle.sin()],
                frequency: TAU / rng.random_range(lo..hi).exp(),
                phase: rng.random_range(0.0..TAU),
                amplitude: std::array::from_fn(|_| rng.random_range(-0.12..0.12)),
            }
        })
        .collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = base;
            for w in &waves {
                let s = (w.frequency * (px * w.direction[0] + py * w.direction[1]) + w.phase).sin();
                for c in 0..3 {
                    color[c] += w.amplitude[c] * s;
                }
            }
            data.extend(color.iter().map(|&v| quantize(v as f32)));
        }
    }
    CodedImage::from_vec(width, height, data).expect("texture dimensions are positive")
}

/// Star-convex polygon centered in a `size × size` box.
#[derive(Debug, Clone, PartialEq)]
pub struct StarShape {
    center: Point,
    angles: Vec<f64>,
    radii: Vec<f64>,
}

impl StarShape {
    pub fn random(rng: &mut ChaCha8Rng, size: usize) -> Self {
        let n = rng.random_range(5..=11);
        let step = TAU / n as f64;
        let start = rng.random_range(0.0..TAU);
        let max_radius = size as f64 / 2.0 - 1.5;
        let angles = (0..n)
            .map(|k| start + step * (k as f64 + rng.random_range(-0.3..0.3)))
            .collect();
        let radii = (0..n)
            .map(|_| max_radius * rng.random_range(0.45..1.0))
            .collect();
        Self {
            center: [size as f64 / 2.0; 2],
            angles,
            radii,
        }
    }

    pub fn center(&self) -> Point {
        self.center
    }

    /// Distance from the center to the polygon boundary along direction
    /// `theta`.
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        let n = self.angles.len();
        let rel = |a: f64| (a - self.angles[0]).rem_euclid(TAU);
        let t = rel(theta);
        let mut k = n - 1;
        for i in 0..n - 1 {
            if t >= rel(self.angles[i]) && t < rel(self.angles[i + 1]) {
                k = i;
                break;
            }
        }
        let vertex = |i: usize| {
            let a = self.angles[i % n];
            [self.radii[i % n] * a.cos(), self.radii[i % n] * a.sin()]
        };
        let (a, b) = (vertex(k), vertex(k + 1));
        let dir = [theta.cos(), theta.sin()];
        // Solve s·dir = a + u·(b - a) for s.
        let e = [b[0] - a[0], b[1] - a[1]];
        let denom = dir[0] * e[1] - dir[1] * e[0];
        if denom.abs() < 1e-12 {
            return self.radii[k].min(self.radii[(k + 1) % n]);
        }
        (a[0] * e[1] - a[1] * e[0]) / denom
    }

    /// Coverage with a linear ramp of one pixel on either side of the
    /// boundary, measured radially.
    pub fn alpha_at(&self, p: Point) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let rho = d[0].hypot(d[1]);
        if rho == 0.0 {
            return 1.0;
        }
        let inside = self.boundary_radius(d[1].atan2(d[0])) - rho;
        (0.5 + inside / 2.0).clamp(0.0, 1.0)
    }
}

/// The shape used by [`procedural_sprite`] for the same seed and size.
pub fn procedural_shape(seed: u64, size: usize) -> StarShape {
    StarShape::random(&mut stream(seed, 0, Purpose::Shape, 0), size)
}

/// Deterministic textured blob of `size × size` pixels.
pub fn procedural_sprite(seed: u64, size: usize) -> Result<Sprite, GenerationError> {
    if size < 8 {
        return Err(GenerationError::InvalidScene(format!(
            "sprite size {size} is below the 8 px minimum"
        )));
    }
    let color = texture(
        &mut stream(seed, 0, Purpose::Texture, 0),
        size,
        size,
        [3.0, (size as f64 / 2.0).max(4.0)],
    );
    let shape = procedural_shape(seed, size);
    let mut alpha = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let a = shape.alpha_at([x as f64 + 0.5, y as f64 + 0.5]);
            alpha.push(quantize(a as f32));
        }
    }
    Sprite::new(color, alpha)
}

/// Opaque textured backdrop.
pub fn procedural_background(
    seed: u64,
    width: usize,
    height: usize,
    wavelength: [f64; 2],
) -> Result<Sprite, GenerationError> {
    if width == 0 || height == 0 {
        return Err(GenerationError::InvalidScene("empty background".into()));
    }
    let color = texture(
        &mut stream(seed, 0, Purpose::Texture, 1),
        width,
        height,
        wavelength,
    );
    Ok(Sprite::opaque(color))
}
