use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::imaging::{AttributeMap, WorkingImage};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&self, other: &Self) -> Self {
        let mut out = *self;
        out.add(other.sum);
        out.carry += other.carry;
        out
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Streaming sums over per-pixel squared errors: the pixel count `M`,
/// `Σ SE_k` and `Σ SE_k²`. Sums are compensated so that the variance used by
/// PSNR*σ survives cancellation on large, nearly constant error maps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorAccumulator {
    count: u64,
    sum_se: CompensatedSum,
    sum_se_sq: CompensatedSum,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, se: f64) {
        self.count += 1;
        self.sum_se.add(se);
        self.sum_se_sq.add(se * se);
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            count: self.count + other.count,
            sum_se: self.sum_se.merge(&other.sum_se),
            sum_se_sq: self.sum_se_sq.merge(&other.sum_se_sq),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum_se(&self) -> f64 {
        self.sum_se.value()
    }

    pub fn sum_se_sq(&self) -> f64 {
        self.sum_se_sq.value()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum_se() / self.count as f64)
    }
}

impl std::iter::Sum for ErrorAccumulator {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::new(), |a, b| a.merge(&b))
    }
}

/// Per-pixel squared error, averaged over the three channels.
pub fn se_map(pred: &WorkingImage, gt: &WorkingImage) -> Result<AttributeMap> {
    if pred.dims() != gt.dims() {
        return Err(MetricsError::Argument(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let values = pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .map(|(p, g)| {
            (0..3)
                .map(|c| {
                    let d = p[c] as f64 - g[c] as f64;
                    d * d
                })
                .sum::<f64>()
                / 3.0
        })
        .collect();
    AttributeMap::new(pred.width(), pred.height(), values)
        .map_err(|e| MetricsError::Argument(e.to_string()))
}

/// Adds the squared errors of valid pixels selected by `mask` (all valid
/// pixels when `None`), in row-major order.
pub fn accumulate(
    acc: ErrorAccumulator,
    se: &AttributeMap,
    mask: Option<&[bool]>,
) -> ErrorAccumulator {
    let mut acc = acc;
    match mask {
        Some(mask) => {
            assert_eq!(mask.len(), se.len(), "mask does not match the error map");
            for ((&v, &ok), &m) in se.values().iter().zip(se.valid()).zip(mask) {
                if ok && m {
                    acc.push(v);
                }
            }
        }
        None => {
            for (&v, &ok) in se.values().iter().zip(se.valid()) {
                if ok {
                    acc.push(v);
                }
            }
        }
    }
    acc
}
