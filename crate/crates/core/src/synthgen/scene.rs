//! Layered scenes and their linear-in-time point maps.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Purpose};
use super::sprite::{Sprite, SpriteSource};
use super::transform::{GeometricTransform, PhotometricTransform, Point};
use super::GenerationError;

/// Newton iterations allowed when inverting a blended point map.
pub const MAX_NEWTON_ITERATIONS: usize = 25;
/// Largest residual, in canvas pixels, accepted from an inversion.
pub const INVERSION_TOLERANCE: f64 = 1e-4;
/// Alpha at or above which a layer owns a pixel for ground-truth purposes.
pub const OWNERSHIP_ALPHA: f32 = 0.5;
/// Rejection-sampling budget for scene constraints.
pub const REJECTION_BUDGET: usize = 1000;

/// Canvas-aligned box, `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Bounds {
    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] < self.x1 && p[1] >= self.y0 && p[1] < self.y1
    }
}

/// One sprite moving between two endpoint placements. Every sprite point
/// travels on the straight line `(1 - t)·start(p) + t·end(p)`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub sprite: Arc<Sprite>,
    pub source: SpriteSource,
    pub start: GeometricTransform,
    pub end: GeometricTransform,
    pub photometric_start: PhotometricTransform,
    pub photometric_end: PhotometricTransform,
}

impl Layer {
    pub fn new(
        sprite: Sprite,
        source: SpriteSource,
        start: GeometricTransform,
        end: GeometricTransform,
    ) -> Self {
        Self {
            sprite: Arc::new(sprite),
            source,
            start,
            end,
            photometric_start: PhotometricTransform::identity(),
            photometric_end: PhotometricTransform::identity(),
        }
    }

    pub fn with_photometric(
        mut self,
        start: PhotometricTransform,
        end: PhotometricTransform,
    ) -> Self {
        self.photometric_start = start;
        self.photometric_end = end;
        self
    }

    /// Canvas position of sprite point `p` at time `t`.
    #[inline]
    pub fn point_map(&self, t: f64, p: Point) -> Option<Point> {
        if t == 0.0 {
            return self.start.apply(p);
        }
        if t == 1.0 {
            return self.end.apply(p);
        }
        let a = self.start.apply(p)?;
        let b = self.end.apply(p)?;
        Some([(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]])
    }

    #[inline]
    fn jacobian(&self, t: f64, p: Point) -> Option<[[f64; 2]; 2]> {
        let a = self.start.jacobian(p)?;
        let b = self.end.jacobian(p)?;
        Some(std::array::from_fn(|r| {
            std::array::from_fn(|c| (1.0 - t) * a[r][c] + t * b[r][c])
        }))
    }

    /// Sprite point that lands on canvas point `x` at time `t`.
    ///
    /// Damped Newton iteration on the 2×2 Jacobian, seeded from the inverse
    /// of the blended matrix `(1 - t)·start + t·end` (exact when both
    /// endpoints are affine). Returns `None` when the residual does not drop
    /// below [`INVERSION_TOLERANCE`] within [`MAX_NEWTON_ITERATIONS`].
    pub fn invert_point_map(&self, t: f64, x: Point) -> Option<Point> {
        let seed = match GeometricTransform::new(self.start.blend(&self.end, t)) {
            Ok(m) => m.inverse().apply(x),
            Err(_) => None,
        };
        let mut p = seed.or_else(|| self.start.inverse().apply(x))?;
        let residual = |p: Point| -> Option<(Point, f64)> {
            let f = self.point_map(t, p)?;
            let r = [f[0] - x[0], f[1] - x[1]];
            Some((r, r[0].hypot(r[1])))
        };
        let (mut r, mut norm) = residual(p)?;
        let converged = 1e-9 * (1.0 + x[0].abs().max(x[1].abs()));
        for _ in 0..MAX_NEWTON_ITERATIONS {
            if norm <= converged {
                break;
            }
            let j = self.jacobian(t, p)?;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-15 {
                return None;
            }
            let step = [
                (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            ];
            let mut lambda = 1.0;
            let mut improved = false;
            while lambda >= 1.0 / 1024.0 {
                let q = [p[0] - lambda * step[0], p[1] - lambda * step[1]];
                if let Some((rq, nq)) = residual(q) {
                    if nq < norm {
                        p = q;
                        r = rq;
                        norm = nq;
                        improved = true;
                        break;
                    }
                }
                lambda /= 2.0;
            }
            if !improved {
                break;
            }
        }
        (norm <= INVERSION_TOLERANCE).then_some(p)
    }

    /// Photometric transform at time `t`, interpolated in parameter space.
    pub fn photometric(&self, t: f64) -> PhotometricTransform {
        self.photometric_start.lerp(&self.photometric_end, t)
    }

    pub fn photometric_at(&self, t: f64, color: [f64; 3]) -> [f64; 3] {
        self.photometric(t).apply(color)
    }

    /// Conservative canvas bounds of the sprite at time `t`, from a dense
    /// sampling of the sprite border plus a two-pixel margin.
    pub fn bounds_at(&self, t: f64) -> Bounds {
        let (w, h) = (self.sprite.width() as f64, self.sprite.height() as f64);
        let mut b = Bounds {
            x0: f64::INFINITY,
            y0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y1: f64::NEG_INFINITY,
        };
        const STEPS: usize = 32;
        for k in 0..=STEPS {
            let s = k as f64 / STEPS as f64;
            for p in [
                [s * w, -1.0],
                [s * w, h + 1.0],
                [-1.0, s * h],
                [w + 1.0, s * h],
            ] {
                match self.point_map(t, p) {
                    Some(q) => {
                        b.x0 = b.x0.min(q[0]);
                        b.y0 = b.y0.min(q[1]);
                        b.x1 = b.x1.max(q[0]);
                        b.y1 = b.y1.max(q[1]);
                    }
                    None => {
                        return Bounds {
                            x0: f64::NEG_INFINITY,
                            y0: f64::NEG_INFINITY,
                            x1: f64::INFINITY,
                            y1: f64::INFINITY,
                        }
                    }
                }
            }
        }
        Bounds {
            x0: b.x0 - 2.0,
            y0: b.y0 - 2.0,
            x1: b.x1 + 2.0,
            y1: b.y1 + 2.0,
        }
    }
}

/// Parameter ranges of the photometric family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricRanges {
    pub gain: [f64; 2],
    pub gamma: [f64; 2],
    pub offset: f64,
    /// Largest change between the two endpoints, as a fraction of each
    /// parameter's range.
    pub change: f64,
}

impl Default for PhotometricRanges {
    fn default() -> Self {
        Self {
            gain: [0.7, 1.4],
            gamma: [0.8, 1.25],
            offset: 0.05,
            change: 0.15,
        }
    }
}

/// Sampling ranges for [`sample_scene`]. Distances are in canvas pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Inclusive range of foreground sprite counts.
    pub sprite_count: [usize; 2],
    /// Sprite edge length as a fraction of the canvas height.
    pub sprite_size: [f64; 2],
    pub max_translation: f64,
    pub max_rotation_deg: f64,
    pub scale_range: [f64; 2],
    pub max_perspective: f64,
    /// Extra background extent on every side, as a fraction of the canvas.
    pub background_margin: f64,
    pub background_translation: f64,
    pub background_rotation_deg: f64,
    pub background_scale_range: [f64; 2],
    pub background_perspective: f64,
    pub photometric: PhotometricRanges,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::for_canvas(4096, 2048)
    }
}

impl SceneConfig {
    /// Defaults for a canvas, with motion ranges scaled from the 4096-wide
    /// reference (translation up to 512 px, perspective terms up to 1e-5).
    pub fn for_canvas(width: usize, height: usize) -> Self {
        let s = width as f64 / 4096.0;
        Self {
            width,
            height,
            sprite_count: [3, 8],
            sprite_size: [0.15, 0.45],
            max_translation: 512.0 * s,
            max_rotation_deg: 10.0,
            scale_range: [0.9, 1.1],
            max_perspective: 1e-5 / s,
            background_margin: 0.15,
            background_translation: 128.0 * s,
            background_rotation_deg: 2.0,
            background_scale_range: [0.97, 1.03],
            background_perspective: 1e-6 / s,
            photometric: PhotometricRanges::default(),
        }
    }

    fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidScene(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("canvas must be at least 8x8");
        }
        if self.sprite_count[0] < 1 || self.sprite_count[0] > self.sprite_count[1] {
            return bad("sprite_count must be a non-empty range starting at 1 or more");
        }
        if !(self.sprite_size[0] > 0.0 && self.sprite_size[0] <= self.sprite_size[1]) {
            return bad("sprite_size must be a positive range");
        }
        if self.scale_range[0] <= 0.0 || self.scale_range[0] > self.scale_range[1] {
            return bad("scale_range must be a positive range");
        }
        if self.background_scale_range[0] <= 0.0
            || self.background_scale_range[0] > self.background_scale_range[1]
        {
            return bad("background_scale_range must be a positive range");
        }
        Ok(())
    }
}

/// Nine sample times `i / 8`: inputs at `i = 0, 8`, ground truth at `1..=7`.
pub const TIMESTEP_COUNT: usize = 9;

pub fn timestep(index: usize) -> f64 {
    index as f64 / 8.0
}

/// Layered scene; `layers[0]` is the opaque background and higher indices
/// stack on top.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Layer>,
}

impl SceneSpec {
    /// Builds a scene from explicit layers. The first layer must be opaque and
    /// cover the canvas at every sampled time.
    pub fn from_layers(
        seed: u64,
        width: usize,
        height: usize,
        layers: Vec<Layer>,
    ) -> Result<Self, GenerationError> {
        if width == 0 || height == 0 {
            return Err(GenerationError::InvalidScene("empty canvas".into()));
        }
        let Some(background) = layers.first() else {
            return Err(GenerationError::InvalidScene("scene has no layers".into()));
        };
        if !background.sprite.is_opaque() {
            return Err(GenerationError::InvalidScene(
                "background layer must be fully opaque".into(),
            ));
        }
        if !covers_canvas(background, width, height, 0.0) {
            return Err(GenerationError::InvalidScene(
                "background does not cover the canvas".into(),
            ));
        }
        Ok(Self {
            seed,
            width,
            height,
            layers,
        })
    }
}

/// Checks that every canvas corner and edge midpoint pulls back into the
/// sprite, `margin` pixels away from its border, at 33 times in `[0, 1]`.
fn covers_canvas(layer: &Layer, width: usize, height: usize, margin: f64) -> bool {
    let (w, h) = (width as f64, height as f64);
    let (sw, sh) = (layer.sprite.width() as f64, layer.sprite.height() as f64);
    let probes = [
        [0.0, 0.0],
        [w, 0.0],
        [0.0, h],
        [w, h],
        [w / 2.0, 0.0],
        [w / 2.0, h],
        [0.0, h / 2.0],
        [w, h / 2.0],
    ];
    (0..=32).all(|k| {
        let t = k as f64 / 32.0;
        probes.iter().all(|&x| match layer.invert_point_map(t, x) {
            Some(p) => {
                p[0] >= margin - 1e-6
                    && p[1] >= margin - 1e-6
                    && p[0] <= sw - margin + 1e-6
                    && p[1] <= sh - margin + 1e-6
            }
            None => false,
        })
    })
}

fn symmetric(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    if limit > 0.0 {
        rng.random_range(-limit..=limit)
    } else {
        0.0
    }
}

fn within(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn sample_photometric(
    rng: &mut ChaCha8Rng,
    r: &PhotometricRanges,
) -> (PhotometricTransform, PhotometricTransform) {
    let start = PhotometricTransform {
        gain: std::array::from_fn(|_| within(rng, r.gain)),
        gamma: std::array::from_fn(|_| within(rng, r.gamma)),
        offset: symmetric(rng, r.offset),
    };
    let nudge = |rng: &mut ChaCha8Rng, v: f64, range: [f64; 2]| {
        let span = (range[1] - range[0]) * r.change;
        (v + symmetric(rng, span)).clamp(range[0], range[1])
    };
    let end = PhotometricTransform {
        gain: std::array::from_fn(|c| nudge(rng, start.gain[c], r.gain)),
        gamma: std::array::from_fn(|c| nudge(rng, start.gamma[c], r.gamma)),
        offset: nudge(rng, start.offset, [-r.offset, r.offset]),
    };
    (start, end)
}

struct Motion {
    rotation_deg: f64,
    scale: [f64; 2],
    perspective: f64,
    anchor: Point,
}

impl Motion {
    fn endpoint(
        &self,
        rng: &mut ChaCha8Rng,
        center: Point,
    ) -> Result<GeometricTransform, GenerationError> {
        let angle = symmetric(rng, self.rotation_deg).to_radians();
        let scale = within(rng, self.scale);
        let perspective = [
            symmetric(rng, self.perspective),
            symmetric(rng, self.perspective),
        ];
        GeometricTransform::placement(center, angle, scale, perspective, self.anchor)
    }
}

/// Samples a scene: an opaque background that covers the canvas at every
/// time (rejection-sampled) plus a stack of procedural sprites with random
/// endpoint placements and photometric endpoints.
pub fn sample_scene(config: &SceneConfig, seed: u64) -> Result<SceneSpec, GenerationError> {
    config.validate()?;
    let (w, h) = (config.width as f64, config.height as f64);

    let bg_w = (w * (1.0 + 2.0 * config.background_margin)).round();
    let bg_h = (h * (1.0 + 2.0 * config.background_margin)).round();
    if bg_w < 1.0 || bg_h < 1.0 {
        return Err(GenerationError::RejectionBudget {
            constraint: "background coverage".into(),
            tries: 0,
        });
    }
    let bg_source = SpriteSource::Background {
        seed,
        width: bg_w as usize,
        height: bg_h as usize,
        wavelength: [4.0, (h / 4.0).max(8.0)],
    };
    let bg_anchor = [bg_w / 2.0, bg_h / 2.0];
    let mut background = None;
    // Coverage is tested on a placeholder of the right size; the texture is
    // only rendered once the geometry is accepted.
    let mut probe = Layer::new(
        Sprite::opaque(
            crate::imaging::CodedImage::filled(bg_w as usize, bg_h as usize, [0; 3])
                .expect("positive size"),
        ),
        SpriteSource::Custom,
        GeometricTransform::identity(),
        GeometricTransform::identity(),
    );
    for attempt in 0..REJECTION_BUDGET {
        let rng = &mut stream(seed, 0, Purpose::Geometry, attempt as u64);
        let motion = Motion {
            rotation_deg: config.background_rotation_deg,
            scale: config.background_scale_range,
            perspective: config.background_perspective,
            anchor: bg_anchor,
        };
        let start = motion.endpoint(rng, [w / 2.0, h / 2.0])?;
        let angle: f64 = rng.random_range(0.0..TAU);
        let dist = rng.random_range(0.0..=1.0) * config.background_translation;
        let end = motion.endpoint(
            rng,
            [w / 2.0 + dist * angle.cos(), h / 2.0 + dist * angle.sin()],
        )?;
        probe.start = start;
        probe.end = end;
        if covers_canvas(&probe, config.width, config.height, 1.0) {
            background = Some((start, end));
            break;
        }
    }
    let Some((bg_start, bg_end)) = background else {
        return Err(GenerationError::RejectionBudget {
            constraint: "background coverage".into(),
            tries: REJECTION_BUDGET,
        });
    };
    let mut layers = vec![Layer::new(bg_source.build()?, bg_source, bg_start, bg_end)
        .with_photometric_pair(sample_photometric(
            &mut stream(seed, 0, Purpose::Photometric, 0),
            &config.photometric,
        ))];

    let layout = &mut stream(seed, 0, Purpose::Layout, 0);
    let count = layout.random_range(config.sprite_count[0]..=config.sprite_count[1]);
    for id in 1..=count as u64 {
        let rng = &mut stream(seed, id, Purpose::Geometry, 0);
        let size = (within(rng, config.sprite_size) * h).round().max(8.0) as usize;
        let motion = Motion {
            rotation_deg: config.max_rotation_deg,
            scale: config.scale_range,
            perspective: config.max_perspective,
            anchor: [size as f64 / 2.0; 2],
        };
        let c0 = [layout.random_range(0.0..w), layout.random_range(0.0..h)];
        let start = motion.endpoint(rng, c0)?;
        let angle: f64 = rng.random_range(0.0..TAU);
        let dist = rng.random_range(0.0..=1.0) * config.max_translation;
        let end = motion.endpoint(
            rng,
            [c0[0] + dist * angle.cos(), c0[1] + dist * angle.sin()],
        )?;
        let source = SpriteSource::Procedural {
            seed: super::rng::key(&[seed, id]),
            size,
        };
        let photometric = sample_photometric(
            &mut stream(seed, id, Purpose::Photometric, 0),
            &config.photometric,
        );
        layers.push(
            Layer::new(source.build()?, source, start, end).with_photometric_pair(photometric),
        );
    }
    Ok(SceneSpec {
        seed,
        width: config.width,
        height: config.height,
        layers,
    })
}

impl Layer {
    fn with_photometric_pair(self, pair: (PhotometricTransform, PhotometricTransform)) -> Self {
        self.with_photometric(pair.0, pair.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::CodedImage;

    fn plain_layer(start: GeometricTransform, end: GeometricTransform) -> Layer {
        Layer::new(
            Sprite::opaque(CodedImage::filled(16, 16, [0; 3]).unwrap()),
            SpriteSource::Custom,
            start,
            end,
        )
    }

    fn mild(seed: u64) -> Layer {
        let rng = &mut stream(seed, 9, Purpose::Geometry, 0);
        let mut t = || {
            GeometricTransform::placement(
                [rng.random_range(20.0..100.0), rng.random_range(20.0..60.0)],
                rng.random_range(-0.17..0.17),
                rng.random_range(0.9..1.1),
                [rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)],
                [8.0, 8.0],
            )
            .unwrap()
        };
        let (a, b) = (t(), t());
        plain_layer(a, b)
    }

    #[test]
    fn endpoints_are_exact() {
        let l = mild(1);
        let p = [3.25, 9.5];
        assert_eq!(l.point_map(0.0, p), l.start.apply(p));
        assert_eq!(l.point_map(1.0, p), l.end.apply(p));
    }

    #[test]
    fn midpoint_of_translation() {
        let l = plain_layer(
            GeometricTransform::identity(),
            GeometricTransform::translation(8.0, 0.0),
        );
        assert_eq!(l.point_map(0.5, [2.0, 3.0]), Some([6.0, 3.0]));
    }

    #[test]
    fn trajectories_are_linear() {
        for seed in 0..50 {
            let l = mild(seed);
            let p = [seed as f64 * 0.3, 7.0 - seed as f64 * 0.1];
            let p0 = l.point_map(0.0, p).unwrap();
            let q = l.point_map(0.25, p).unwrap();
            let p1 = l.point_map(1.0, p).unwrap();
            for c in 0..2 {
                assert!((q[c] - p0[c] - (p1[c] - p0[c]) / 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn affine_inversion_is_immediate() {
        let a = GeometricTransform::placement([30.0, 20.0], 0.1, 1.05, [0.0; 2], [8.0; 2]).unwrap();
        let b =
            GeometricTransform::placement([50.0, 26.0], -0.1, 0.95, [0.0; 2], [8.0; 2]).unwrap();
        let l = plain_layer(a, b);
        for t in [0.1, 0.5, 0.9] {
            let x = [41.0, 22.5];
            let p = l.invert_point_map(t, x).unwrap();
            let back = l.point_map(t, p).unwrap();
            assert!((back[0] - x[0]).hypot(back[1] - x[1]) <= 1e-9);
        }
    }

    #[test]
    fn inversion_at_zero_matches_projective_inverse() {
        let l = mild(3);
        let x = [50.0, 40.0];
        let p = l.invert_point_map(0.0, x).unwrap();
        let q = l.start.inverse().apply(x).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
    }

    #[test]
    fn perspective_round_trip_at_midpoint() {
        let mut rng = stream(77, 0, Purpose::Layout, 0);
        let mut worst: f64 = 0.0;
        for k in 0..10_000 {
            let l = mild(k % 97);
            let x = [rng.random_range(0.0..128.0), rng.random_range(0.0..96.0)];
            let p = l
                .invert_point_map(0.5, x)
                .expect("mild perspective inverts");
            let back = l.point_map(0.5, p).unwrap();
            worst = worst.max((back[0] - x[0]).hypot(back[1] - x[1]));
        }
        assert!(worst <= 1e-4, "worst residual {worst}");
    }

    #[test]
    fn photometric_endpoints() {
        let p0 = PhotometricTransform {
            gain: [0.8, 1.0, 1.2],
            gamma: [1.1, 0.9, 1.0],
            offset: 0.02,
        };
        let p1 = PhotometricTransform {
            gain: [1.1, 0.9, 0.75],
            gamma: [0.85, 1.2, 1.0],
            offset: -0.03,
        };
        let l = plain_layer(
            GeometricTransform::identity(),
            GeometricTransform::identity(),
        )
        .with_photometric(p0, p1);
        let c = [0.3, 0.6, 0.9];
        assert_eq!(l.photometric_at(0.0, c), p0.apply(c));
        assert_eq!(l.photometric_at(1.0, c), p1.apply(c));
        let same = plain_layer(
            GeometricTransform::identity(),
            GeometricTransform::identity(),
        )
        .with_photometric(p0, p0);
        assert_eq!(same.photometric_at(0.3, c), same.photometric_at(0.8, c));
    }

    fn transforms(scene: &SceneSpec) -> Vec<[f64; 9]> {
        scene
            .layers
            .iter()
            .flat_map(|l| [l.start.into(), l.end.into()])
            .collect()
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SceneConfig::for_canvas(128, 64);
        let a = sample_scene(&cfg, 42).unwrap();
        let b = sample_scene(&cfg, 42).unwrap();
        assert_eq!(transforms(&a), transforms(&b));
        assert_eq!(a.layers.len(), b.layers.len());
        for (x, y) in a.layers.iter().zip(&b.layers) {
            assert_eq!(x.sprite, y.sprite);
            assert_eq!(x.photometric_end, y.photometric_end);
        }
        assert!(a.layers.len() >= 2);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = SceneConfig::for_canvas(128, 64);
        let scenes: Vec<Vec<[f64; 9]>> = (0..100)
            .map(|s| transforms(&sample_scene(&cfg, s).unwrap()))
            .collect();
        for i in 0..scenes.len() {
            for j in i + 1..scenes.len() {
                assert_ne!(scenes[i], scenes[j]);
            }
        }
    }

    #[test]
    fn undersized_background_exhausts_budget() {
        let mut cfg = SceneConfig::for_canvas(64, 32);
        cfg.background_margin = -0.1;
        match sample_scene(&cfg, 1) {
            Err(GenerationError::RejectionBudget { constraint, .. }) => {
                assert!(constraint.contains("background"))
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn sampled_background_covers_canvas() {
        let cfg = SceneConfig::for_canvas(256, 128);
        for seed in 0..20 {
            let s = sample_scene(&cfg, seed).unwrap();
            assert!(covers_canvas(&s.layers[0], 256, 128, 1.0));
        }
    }

    #[test]
    fn sampled_ranges_respected() {
        let cfg = SceneConfig::for_canvas(4096, 2048);
        let s = sample_scene(&cfg, 5).unwrap();
        for l in &s.layers[1..] {
            let c = [l.sprite.width() as f64 / 2.0; 2];
            let (a, b) = (l.start.apply(c).unwrap(), l.end.apply(c).unwrap());
            assert!((b[0] - a[0]).hypot(b[1] - a[1]) <= 512.0 + 1e-9);
            let m = l.start.matrix();
            assert!(m[2][0].abs() <= 1e-5 + 1e-12 && m[2][1].abs() <= 1e-5 + 1e-12);
            for p in [l.photometric_start, l.photometric_end] {
                assert!(p.gain.iter().all(|g| (0.7..=1.4).contains(g)));
                assert!(p.gamma.iter().all(|g| (0.8..=1.25).contains(g)));
                assert!(p.offset.abs() <= 0.05);
            }
        }
    }
}
