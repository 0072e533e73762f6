//! Occlusion estimated from flow alone, for data without layer visibility.
//!
//! A pixel `p` is taken to be visible in an input when following the flow
//! there and back lands near `p`:
//! `‖F_fwd(p) + F_bwd(p + F_fwd(p))‖² ≤ α (‖F_fwd(p)‖² + ‖F_bwd(·)‖²) + β`.

use super::{MetricsError, Result};
use crate::imaging::{FlowField, OcclusionMask, INVALID_CLASS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyThreshold {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ConsistencyThreshold {
    fn default() -> Self {
        Self { alpha: 0.01, beta: 0.5 }
    }
}

/// Bilinear lookup using only valid neighbours, with pixel centres at
/// `i + 0.5`. `None` outside the frame or without a valid neighbour.
fn sample(field: &FlowField, x: f64, y: f64) -> Option<[f64; 2]> {
    let (w, h) = field.dims();
    if !(0.0..w as f64).contains(&x) || !(0.0..h as f64).contains(&y) {
        return None;
    }
    let (fx, fy) = (x - 0.5, y - 0.5);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (ax, ay) = (fx - x0, fy - y0);
    let mut acc = [0.0; 2];
    let mut weight = 0.0;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - ax) * (1.0 - ay)),
        (1, 0, ax * (1.0 - ay)),
        (0, 1, (1.0 - ax) * ay),
        (1, 1, ax * ay),
    ] {
        let (cx, cy) = ((x0 as i64 + dx).clamp(0, w as i64 - 1), (y0 as i64 + dy).clamp(0, h as i64 - 1));
        if let Some(v) = field.get(cy as usize * w + cx as usize) {
            acc[0] += wgt * v[0] as f64;
            acc[1] += wgt * v[1] as f64;
            weight += wgt;
        }
    }
    (weight > 1e-12).then(|| [acc[0] / weight, acc[1] / weight])
}

/// Per-pixel round-trip test of `forward` against `backward`, which lives
/// on the target frame's grid. `None` where `forward` is invalid; leaving
/// the frame counts as not visible.
pub fn flow_consistency(
    forward: &FlowField,
    backward: &FlowField,
    threshold: ConsistencyThreshold,
) -> Result<Vec<Option<bool>>> {
    let (w, _) = forward.dims();
    Ok((0..forward.len())
        .map(|i| {
            let f = forward.get(i)?;
            let (f0, f1) = (f[0] as f64, f[1] as f64);
            let (x, y) = ((i % w) as f64 + 0.5 + f0, (i / w) as f64 + 0.5 + f1);
            let Some(b) = sample(backward, x, y) else { return Some(false) };
            let err = (f0 + b[0]).powi(2) + (f1 + b[1]).powi(2);
            let scale = f0 * f0 + f1 * f1 + b[0] * b[0] + b[1] * b[1];
            Some(err <= threshold.alpha * scale + threshold.beta)
        })
        .collect())
}

/// Occlusion classes at the intermediate frame from the flows to both
/// inputs (`to_first`, `to_second`) and the flows from each input back to
/// the intermediate frame (`from_first`, `from_second`).
pub fn consistency_occlusion(
    to_first: &FlowField,
    from_first: &FlowField,
    to_second: &FlowField,
    from_second: &FlowField,
    threshold: ConsistencyThreshold,
) -> Result<OcclusionMask> {
    if to_first.dims() != to_second.dims() {
        return Err(MetricsError::Argument(format!(
            "flow fields differ in size: {:?} vs {:?}",
            to_first.dims(),
            to_second.dims()
        )));
    }
    let first = flow_consistency(to_first, from_first, threshold)?;
    let second = flow_consistency(to_second, from_second, threshold)?;
    let raw = first
        .iter()
        .zip(&second)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => 2 - *a as u8 - *b as u8,
            _ => INVALID_CLASS,
        })
        .collect();
    let (w, h) = to_first.dims();
    OcclusionMask::from_raw(w, h, raw).map_err(|e| MetricsError::Argument(e.to_string()))
}
