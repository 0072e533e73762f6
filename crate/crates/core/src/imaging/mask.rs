//! Per-pixel annotations: occlusion classes, input visibility and scalar
//! attribute maps.

use super::codec::{read_gray16, read_gray8, write_gray16, write_gray8};
use super::{ImagingError, Result};

/// On-disk value marking an invalid pixel in 8-bit masks.
pub const INVALID_CLASS: u8 = 255;

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 || len != width * height {
        return Err(ImagingError::Argument(format!(
            "buffer of {len} values does not describe a {width}x{height} map"
        )));
    }
    Ok(())
}

/// Occlusion class per pixel: the number of input frames (0, 1 or 2) in
/// which the pixel's scene point is hidden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    class: Vec<u8>,
    valid: Vec<bool>,
}

impl OcclusionMask {
    /// `raw` holds classes `0..=2`, with [`INVALID_CLASS`] for invalid pixels.
    pub fn from_raw(width: usize, height: usize, raw: Vec<u8>) -> Result<Self> {
        check_len(width, height, raw.len())?;
        let mut class = raw;
        let mut valid = vec![true; class.len()];
        for (c, ok) in class.iter_mut().zip(valid.iter_mut()) {
            match *c {
                0..=2 => {}
                INVALID_CLASS => {
                    *c = 0;
                    *ok = false;
                }
                other => {
                    return Err(ImagingError::Argument(format!(
                        "occlusion class {other} out of range"
                    )))
                }
            }
        }
        Ok(Self {
            width,
            height,
            class,
            valid,
        })
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

    pub fn classes(&self) -> &[u8] {
        &self.class
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, index: usize) -> Option<u8> {
        self.valid[index].then(|| self.class[index])
    }

    pub fn to_raw(&self) -> Vec<u8> {
        self.class
            .iter()
            .zip(&self.valid)
            .map(|(&c, &ok)| if ok { c } else { INVALID_CLASS })
            .collect()
    }

    /// Counts of valid pixels per class.
    pub fn class_counts(&self) -> [u64; 3] {
        let mut counts = [0u64; 3];
        for (&c, &ok) in self.class.iter().zip(&self.valid) {
            if ok {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    pub fn valid_count(&self) -> u64 {
        self.valid.iter().filter(|&&v| v).count() as u64
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        write_gray8(self.width, self.height, &self.to_raw())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, raw) = read_gray8(bytes)?;
        Self::from_raw(w, h, raw)
    }
}

/// Which inputs each pixel is visible in: bit 0 for the first input, bit 1
/// for the second. The occlusion class is the number of cleared bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visibility {
    width: usize,
    height: usize,
    bits: Vec<u8>,
    valid: Vec<bool>,
}

impl Visibility {
    pub const FIRST: u8 = 0b01;
    pub const SECOND: u8 = 0b10;

    pub fn from_raw(width: usize, height: usize, raw: Vec<u8>) -> Result<Self> {
        check_len(width, height, raw.len())?;
        let mut bits = raw;
        let mut valid = vec![true; bits.len()];
        for (b, ok) in bits.iter_mut().zip(valid.iter_mut()) {
            match *b {
                0..=3 => {}
                INVALID_CLASS => {
                    *b = 0;
                    *ok = false;
                }
                other => {
                    return Err(ImagingError::Argument(format!(
                        "visibility value {other} out of range"
                    )))
                }
            }
        }
        Ok(Self {
            width,
            height,
            bits,
            valid,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, index: usize) -> Option<u8> {
        self.valid[index].then(|| self.bits[index])
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn to_raw(&self) -> Vec<u8> {
        self.bits
            .iter()
            .zip(&self.valid)
            .map(|(&b, &ok)| if ok { b } else { INVALID_CLASS })
            .collect()
    }

    pub fn to_occlusion(&self) -> OcclusionMask {
        OcclusionMask {
            width: self.width,
            height: self.height,
            class: self
                .bits
                .iter()
                .map(|&b| 2 - b.count_ones() as u8)
                .zip(&self.valid)
                .map(|(c, &ok)| if ok { c } else { 0 })
                .collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        write_gray8(self.width, self.height, &self.to_raw())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, raw) = read_gray8(bytes)?;
        Self::from_raw(w, h, raw)
    }
}

/// Non-negative per-pixel scalar with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl AttributeMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::with_validity(width, height, values, valid)
    }

    /// Invalid pixels are stored as zero. Valid values must be finite and
    /// non-negative.
    pub fn with_validity(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        check_len(width, height, values.len())?;
        if valid.len() != values.len() {
            return Err(ImagingError::Argument("validity length mismatch".into()));
        }
        for (v, &ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            } else if !v.is_finite() || *v < 0.0 {
                return Err(ImagingError::Argument(format!(
                    "attribute value {v} is not a finite non-negative number"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
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
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.values[index])
    }

    pub fn valid_count(&self) -> u64 {
        self.valid.iter().filter(|&&v| v).count() as u64
    }

    /// Returns a copy with validity restricted to `mask`.
    pub fn restricted(&self, mask: &[bool]) -> Self {
        let mut out = self.clone();
        for ((v, ok), &m) in out.values.iter_mut().zip(out.valid.iter_mut()).zip(mask) {
            if !m {
                *ok = false;
                *v = 0.0;
            }
        }
        out
    }

    /// 16-bit encoding, `round(v * 65535)` with values clamped to `[0, 1]`.
    /// Invalid pixels are written as zero.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let data: Vec<u16> = self
            .values
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        write_gray16(self.width, self.height, &data)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, raw) = read_gray16(bytes)?;
        Self::new(w, h, raw.into_iter().map(|v| v as f64 / 65535.0).collect())
    }
}
