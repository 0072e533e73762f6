//! Dense displacement fields and the Middlebury `.flo` byte layout.
//!
//! Layout: `f32` magic 202021.25, `i32` width, `i32` height, then `(dx, dy)`
//! pairs as `f32`, row-major, all little-endian. Invalid pixels are written
//! as NaN components and come back invalid.

use super::{ImagingError, Result};

pub const FLOW_MAGIC: f32 = 202021.25;

/// Per-pixel displacement in pixels with a validity mask. Invalid pixels
/// always carry `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Builds a field from vectors; non-finite vectors become invalid.
    pub fn from_vectors(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(ImagingError::Argument(format!(
                "expected {} vectors for {width}x{height}, got {}",
                width * height,
                vectors.len()
            )));
        }
        let mut field = Self {
            width,
            height,
            valid: vec![true; vectors.len()],
            vectors,
        };
        for i in 0..field.vectors.len() {
            let [dx, dy] = field.vectors[i];
            if !dx.is_finite() || !dy.is_finite() {
                field.invalidate(i);
            }
        }
        Ok(field)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, index: usize) -> Option<[f32; 2]> {
        self.valid[index].then(|| self.vectors[index])
    }

    pub fn set(&mut self, index: usize, vector: [f32; 2]) {
        if vector[0].is_finite() && vector[1].is_finite() {
            self.vectors[index] = vector;
            self.valid[index] = true;
        } else {
            self.invalidate(index);
        }
    }

    pub fn invalidate(&mut self, index: usize) {
        self.vectors[index] = [0.0; 2];
        self.valid[index] = false;
    }

    /// Multiplies every valid vector by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        for (v, &ok) in out.vectors.iter_mut().zip(&self.valid) {
            if ok {
                *v = [v[0] * factor, v[1] * factor];
            }
        }
        out
    }
}

pub fn write_flow_file(field: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + field.len() * 8);
    out.extend_from_slice(&FLOW_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width as i32).to_le_bytes());
    out.extend_from_slice(&(field.height as i32).to_le_bytes());
    for (v, &ok) in field.vectors.iter().zip(&field.valid) {
        let [dx, dy] = if ok { *v } else { [f32::NAN, f32::NAN] };
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    out
}

pub fn read_flow_file(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(ImagingError::Truncated {
            expected: 12,
            found: bytes.len(),
        });
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLOW_MAGIC {
        return Err(ImagingError::FlowFormat(format!(
            "bad magic {magic}, expected {FLOW_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(ImagingError::FlowFormat(format!(
            "non-positive dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| ImagingError::FlowFormat("dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(ImagingError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let vectors = bytes[12..]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            ]
        })
        .collect();
    FlowField::from_vectors(width, height, vectors)
}
