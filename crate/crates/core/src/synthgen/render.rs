//! Compositing and per-pixel ground truth.

use rayon::prelude::*;

use super::scene::{Bounds, SceneSpec, OWNERSHIP_ALPHA};
use super::transform::Point;
use crate::imaging::{
    AttributeMap, FlowField, OcclusionMask, Visibility, WorkingImage, INVALID_CLASS,
};

/// Rendered frame at time `t` with its annotations, all on the same grid.
///
/// Flows point from the frame to the inputs: `flow_to_first` is `F_{t→0}`
/// and `flow_to_second` is `F_{t→1}`, in grid pixels.
#[derive(Debug, Clone)]
pub struct Annotations {
    pub t: f64,
    pub image: WorkingImage,
    pub flow_to_first: FlowField,
    pub flow_to_second: FlowField,
    pub visibility: Visibility,
    pub photometric: AttributeMap,
    /// Samples where a point-map inversion failed; these are invalid in
    /// every annotation.
    pub inversion_failures: usize,
}

#[derive(Clone, Copy)]
struct Sample {
    color: [f32; 3],
    flow0: [f32; 2],
    flow1: [f32; 2],
    bits: u8,
    phot: f64,
    valid: bool,
}

struct Frame<'a> {
    scene: &'a SceneSpec,
    t: f64,
    bounds: Vec<Bounds>,
    input_bounds: [Vec<Bounds>; 2],
}

impl<'a> Frame<'a> {
    fn new(scene: &'a SceneSpec, t: f64) -> Self {
        let all = |t: f64| {
            scene
                .layers
                .iter()
                .map(|l| l.bounds_at(t))
                .collect::<Vec<_>>()
        };
        Self {
            scene,
            t,
            bounds: all(t),
            input_bounds: [all(0.0), all(1.0)],
        }
    }

    /// Is any layer above `layer` opaque enough to own `x` in input `s`?
    fn covered_above(&self, s: usize, layer: usize, x: Point) -> bool {
        let t = s as f64;
        self.scene.layers[layer + 1..]
            .iter()
            .zip(&self.input_bounds[s][layer + 1..])
            .any(|(l, b)| {
                b.contains(x)
                    && l.invert_point_map(t, x)
                        .is_some_and(|p| l.sprite.alpha_at(p) >= OWNERSHIP_ALPHA)
            })
    }

    /// Topmost layer owning `x` and the sprite point under it. `None` when
    /// nothing qualifies or an inversion above the owner fails.
    fn owner(&self, x: Point) -> Option<(usize, Point)> {
        for (index, layer) in self.scene.layers.iter().enumerate().rev() {
            if !self.bounds[index].contains(x) {
                continue;
            }
            let p = layer.invert_point_map(self.t, x)?;
            if layer.sprite.alpha_at(p) >= OWNERSHIP_ALPHA {
                return Some((index, p));
            }
        }
        None
    }

    fn sample(&self, x: Point) -> Sample {
        let scene = self.scene;
        let mut color = [0.0f32; 3];
        let mut transmittance = 1.0f32;
        let mut owner: Option<(usize, Point)> = None;
        let mut failed = false;
        for (index, layer) in scene.layers.iter().enumerate().rev() {
            if !self.bounds[index].contains(x) {
                continue;
            }
            let Some(p) = layer.invert_point_map(self.t, x) else {
                failed = true;
                continue;
            };
            let alpha = layer.sprite.alpha_at(p);
            if alpha <= 0.0 {
                continue;
            }
            if owner.is_none() && alpha >= OWNERSHIP_ALPHA {
                owner = Some((index, p));
            }
            let c = layer.sprite.color_at(p);
            let c = layer.photometric_at(self.t, [c[0] as f64, c[1] as f64, c[2] as f64]);
            for k in 0..3 {
                color[k] += transmittance * alpha * c[k] as f32;
            }
            transmittance *= 1.0 - alpha;
            if transmittance <= 0.0 {
                break;
            }
        }
        let invalid = Sample {
            color,
            flow0: [0.0; 2],
            flow1: [0.0; 2],
            bits: 0,
            phot: 0.0,
            valid: false,
        };
        let Some((index, p)) = owner.filter(|_| !failed) else {
            return invalid;
        };
        let layer = &scene.layers[index];
        let (Some(a), Some(b)) = (layer.start.apply(p), layer.end.apply(p)) else {
            return invalid;
        };
        let (w, h) = (scene.width as f64, scene.height as f64);
        let mut bits = 0u8;
        for (s, xs) in [a, b].into_iter().enumerate() {
            let inside = xs[0] >= 0.0 && xs[0] < w && xs[1] >= 0.0 && xs[1] < h;
            if inside && !self.covered_above(s, index, xs) {
                bits |= 1 << s;
            }
        }
        let c = layer.sprite.color_at(p);
        let c = [c[0] as f64, c[1] as f64, c[2] as f64];
        let (c0, c1) = (
            layer.photometric_start.apply(c),
            layer.photometric_end.apply(c),
        );
        let phot = (0..3).map(|k| (c1[k] - c0[k]).abs()).sum::<f64>() / 3.0;
        Sample {
            color,
            flow0: [(a[0] - x[0]) as f32, (a[1] - x[1]) as f32],
            flow1: [(b[0] - x[0]) as f32, (b[1] - x[1]) as f32],
            bits,
            phot,
            valid: true,
        }
    }
}

/// Renders time `t` on a grid whose pixel `(i, j)` samples the canvas at
/// `(factor·(i + 0.5), factor·(j + 0.5))`. Flows are divided by `factor` so
/// they are expressed in grid pixels.
pub fn annotate(scene: &SceneSpec, t: f64, factor: usize) -> Annotations {
    assert!(factor >= 1, "sampling factor must be positive");
    let (w, h) = (scene.width / factor, scene.height / factor);
    assert!(w > 0 && h > 0, "grid is empty");
    let frame = Frame::new(scene, t);
    let f = factor as f64;
    let samples: Vec<Sample> = (0..h)
        .into_par_iter()
        .flat_map_iter(|j| {
            let frame = &frame;
            (0..w).map(move |i| frame.sample([f * (i as f64 + 0.5), f * (j as f64 + 0.5)]))
        })
        .collect();

    let scale = 1.0 / factor as f32;
    let mut flow0 = FlowField::zeros(w, h);
    let mut flow1 = FlowField::zeros(w, h);
    let mut raw_bits = Vec::with_capacity(samples.len());
    let mut phot = Vec::with_capacity(samples.len());
    let mut valid = Vec::with_capacity(samples.len());
    let mut color = Vec::with_capacity(samples.len() * 3);
    let mut failures = 0;
    for (index, s) in samples.iter().enumerate() {
        color.extend(s.color.iter().map(|v| v.clamp(0.0, 1.0)));
        if s.valid {
            flow0.set(index, [s.flow0[0] * scale, s.flow0[1] * scale]);
            flow1.set(index, [s.flow1[0] * scale, s.flow1[1] * scale]);
            raw_bits.push(s.bits);
        } else {
            failures += 1;
            flow0.invalidate(index);
            flow1.invalidate(index);
            raw_bits.push(INVALID_CLASS);
        }
        phot.push(s.phot);
        valid.push(s.valid);
    }
    Annotations {
        t,
        image: WorkingImage::from_vec(w, h, color).expect("grid is non-empty"),
        flow_to_first: flow0,
        flow_to_second: flow1,
        visibility: Visibility::from_raw(w, h, raw_bits).expect("bits are in range"),
        photometric: AttributeMap::with_validity(w, h, phot, valid).expect("finite values"),
        inversion_failures: failures,
    }
}

/// Ground-truth flow from time `t` to time `target` on the full canvas grid.
pub fn gt_flow(scene: &SceneSpec, t: f64, target: f64) -> FlowField {
    let frame = Frame::new(scene, t);
    let (w, h) = (scene.width, scene.height);
    let vectors: Vec<Option<[f32; 2]>> = (0..h)
        .into_par_iter()
        .flat_map_iter(|j| {
            let frame = &frame;
            (0..w).map(move |i| {
                let x = [i as f64 + 0.5, j as f64 + 0.5];
                let (index, p) = frame.owner(x)?;
                let y = scene.layers[index].point_map(target, p)?;
                Some([(y[0] - x[0]) as f32, (y[1] - x[1]) as f32])
            })
        })
        .collect();
    let mut flow = FlowField::zeros(w, h);
    for (index, v) in vectors.into_iter().enumerate() {
        match v {
            Some(v) => flow.set(index, v),
            None => flow.invalidate(index),
        }
    }
    flow
}

/// Occlusion classes of the frame at time `t`.
pub fn occlusion_mask(scene: &SceneSpec, t: f64) -> OcclusionMask {
    annotate(scene, t, 1).visibility.to_occlusion()
}

/// Mean absolute photometric change between the two inputs, per pixel.
pub fn photometric_attribute(scene: &SceneSpec, t: f64) -> AttributeMap {
    annotate(scene, t, 1).photometric
}

/// Full-resolution rendering of time `t`.
pub fn render_frame(scene: &SceneSpec, t: f64) -> WorkingImage {
    annotate(scene, t, 1).image
}

/// Topmost layer whose alpha at canvas point `x` reaches the ownership
/// threshold at time `t`, or `None` if no layer qualifies or an inversion
/// fails above the owner.
pub fn owner_at(scene: &SceneSpec, t: f64, x: Point) -> Option<usize> {
    for (index, layer) in scene.layers.iter().enumerate().rev() {
        if !layer.bounds_at(t).contains(x) {
            continue;
        }
        let p = layer.invert_point_map(t, x)?;
        if layer.sprite.alpha_at(p) >= OWNERSHIP_ALPHA {
            return Some(index);
        }
    }
    None
}
