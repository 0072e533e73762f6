use serde::{Deserialize, Serialize};

use super::GenerationError;

/// Projective transform of the plane, stored with the last entry normalized
/// to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct GeometricTransform {
    m: [[f64; 3]; 3],
}

pub type Point = [f64; 2];

/// Smallest `|det|` accepted for an endpoint transform.
pub const MIN_DETERMINANT: f64 = 1e-9;

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

impl GeometricTransform {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, GenerationError> {
        let h = m[2][2];
        if !h.is_finite() || h.abs() < 1e-15 {
            return Err(GenerationError::InvalidScene(
                "transform cannot be normalized (h33 = 0)".into(),
            ));
        }
        let mut n = m;
        n.iter_mut().flatten().for_each(|v| *v /= h);
        if n.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GenerationError::InvalidScene("non-finite transform".into()));
        }
        if det3(&n).abs() <= MIN_DETERMINANT {
            return Err(GenerationError::InvalidScene(format!(
                "transform is not invertible (det = {:e})",
                det3(&n)
            )));
        }
        Ok(Self { m: n })
    }

    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    /// `T(center) · R(angle) · S(scale) · P(perspective) · T(-anchor)`: the
    /// sprite point `anchor` lands on `center`, with perspective terms acting
    /// in anchor-centered coordinates.
    pub fn placement(
        center: Point,
        angle_rad: f64,
        scale: f64,
        perspective: [f64; 2],
        anchor: Point,
    ) -> Result<Self, GenerationError> {
        let (s, c) = angle_rad.sin_cos();
        let rs = [
            [scale * c, -scale * s, center[0]],
            [scale * s, scale * c, center[1]],
            [0.0, 0.0, 1.0],
        ];
        let p = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [perspective[0], perspective[1], 1.0],
        ];
        let shift = [
            [1.0, 0.0, -anchor[0]],
            [0.0, 1.0, -anchor[1]],
            [0.0, 0.0, 1.0],
        ];
        Self::new(mul3(&mul3(&rs, &p), &shift))
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.m)
    }

    pub fn is_affine(&self) -> bool {
        self.m[2][0] == 0.0 && self.m[2][1] == 0.0
    }

    /// Projective action; `None` when the point maps to or behind the line at
    /// infinity.
    #[inline]
    pub fn apply(&self, p: Point) -> Option<Point> {
        let m = &self.m;
        let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
        if w <= 1e-12 {
            return None;
        }
        Some([
            (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2]) / w,
            (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]) / w,
        ])
    }

    /// Jacobian of [`apply`](Self::apply) at `p`, row-major.
    #[inline]
    pub fn jacobian(&self, p: Point) -> Option<[[f64; 2]; 2]> {
        let m = &self.m;
        let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
        if w <= 1e-12 {
            return None;
        }
        let u = m[0][0] * p[0] + m[0][1] * p[1] + m[0][2];
        let v = m[1][0] * p[0] + m[1][1] * p[1] + m[1][2];
        let w2 = w * w;
        Some([
            [
                (m[0][0] * w - u * m[2][0]) / w2,
                (m[0][1] * w - u * m[2][1]) / w2,
            ],
            [
                (m[1][0] * w - v * m[2][0]) / w2,
                (m[1][1] * w - v * m[2][1]) / w2,
            ],
        ])
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        // The adjugate is the inverse up to scale; normalization removes it.
        Self::new(adj).unwrap_or_else(|_| Self { m: adj })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self, GenerationError> {
        Self::new(mul3(&self.m, &other.m))
    }

    /// Entry-wise blend `(1 - t)·self + t·other` of the normalized matrices.
    pub fn blend(&self, other: &Self, t: f64) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (1.0 - t) * self.m[i][j] + t * other.m[i][j];
            }
        }
        out
    }
}

impl From<GeometricTransform> for [f64; 9] {
    fn from(t: GeometricTransform) -> Self {
        let m = t.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }
}

impl TryFrom<[f64; 9]> for GeometricTransform {
    type Error = GenerationError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }
}

/// Per-channel gain and gamma with a global offset:
/// `out_c = clamp(gain_c · in_c^gamma_c + offset, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometricTransform {
    pub gain: [f64; 3],
    pub gamma: [f64; 3],
    pub offset: f64,
}

impl Default for PhotometricTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl PhotometricTransform {
    pub fn identity() -> Self {
        Self {
            gain: [1.0; 3],
            gamma: [1.0; 3],
            offset: 0.0,
        }
    }

    #[inline]
    pub fn apply(&self, color: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (self.gain[c] * color[c].clamp(0.0, 1.0).powf(self.gamma[c]) + self.offset)
                .clamp(0.0, 1.0);
        }
        out
    }

    /// Parameter-space interpolation; exact at `t = 0` and `t = 1`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        if t == 0.0 {
            return *self;
        }
        if t == 1.0 {
            return *other;
        }
        let l = |a: f64, b: f64| a + (b - a) * t;
        Self {
            gain: std::array::from_fn(|c| l(self.gain[c], other.gain[c])),
            gamma: std::array::from_fn(|c| l(self.gamma[c], other.gamma[c])),
            offset: l(self.offset, other.offset),
        }
    }
}
