//! Separable anti-aliased resampling on working-space frames.
//!
//! When downsampling by a factor `s`, the kernel is stretched by `s` so it
//! acts as a low-pass filter; taps are renormalized at the borders, which
//! keeps constant images constant.

use rayon::prelude::*;

use super::{Result, WorkingImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Area average; exact for integer factors.
    Box,
    #[default]
    Lanczos3,
}

impl Kernel {
    pub fn support(self) -> f64 {
        match self {
            Kernel::Box => 0.5,
            Kernel::Lanczos3 => 3.0,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Kernel::Box => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Lanczos3 => {
                if x == 0.0 {
                    1.0
                } else if x.abs() < 3.0 {
                    sinc(x) * sinc(x / 3.0)
                } else {
                    0.0
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    let px = std::f64::consts::PI * x;
    px.sin() / px
}

/// Normalized taps for one output coordinate.
struct Taps {
    start: usize,
    weights: Vec<f64>,
}

fn taps(src: usize, dst: usize, kernel: Kernel) -> Vec<Taps> {
    let scale = src as f64 / dst as f64;
    let stretch = scale.max(1.0);
    let support = kernel.support() * stretch;
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src);
            let mut weights: Vec<f64> = (lo..hi)
                .map(|j| kernel.eval((j as f64 + 0.5 - center) / stretch))
                .collect();
            let sum: f64 = weights.iter().sum();
            if sum != 0.0 {
                weights.iter_mut().for_each(|w| *w /= sum);
            }
            Taps { start: lo, weights }
        })
        .collect()
}

pub fn resize_antialiased(
    image: &WorkingImage,
    new_width: usize,
    new_height: usize,
    kernel: Kernel,
) -> Result<WorkingImage> {
    let (w, h) = image.dims();
    if new_width > w || new_height > h {
        log::warn!("upscaling {w}x{h} to {new_width}x{new_height}; the benchmark only downsamples");
    }
    // Validates the target dimensions before any work happens.
    WorkingImage::filled(new_width, new_height, [0.0; 3])?;

    let src = image.data();
    let horizontal = taps(w, new_width, kernel);
    let mut tmp = vec![0.0f32; new_width * h * 3];
    tmp.par_chunks_mut(new_width * 3)
        .enumerate()
        .for_each(|(y, row)| {
            let src_row = &src[y * w * 3..(y + 1) * w * 3];
            for (x, t) in horizontal.iter().enumerate() {
                let mut acc = [0.0f64; 3];
                for (k, &wt) in t.weights.iter().enumerate() {
                    let s = (t.start + k) * 3;
                    for c in 0..3 {
                        acc[c] += wt * src_row[s + c] as f64;
                    }
                }
                for c in 0..3 {
                    row[x * 3 + c] = acc[c] as f32;
                }
            }
        });

    let vertical = taps(h, new_height, kernel);
    let mut out = vec![0.0f32; new_width * new_height * 3];
    out.par_chunks_mut(new_width * 3)
        .zip(vertical.par_iter())
        .for_each(|(row, t)| {
            for (i, sample) in row.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for (k, &wt) in t.weights.iter().enumerate() {
                    acc += wt * tmp[(t.start + k) * new_width * 3 + i] as f64;
                }
                *sample = (acc as f32).clamp(0.0, 1.0);
            }
        });
    WorkingImage::from_vec(new_width, new_height, out)
}
