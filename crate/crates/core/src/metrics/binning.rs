//! PSNR* broken down by occlusion class, motion magnitude, motion angle and
//! photometric inconsistency.

use serde::{Deserialize, Serialize};

use super::{psnr_star, ErrorAccumulator, MetricsError, Result};
use crate::imaging::{AttributeMap, FlowField, OcclusionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Magnitude,
    Angle,
    Occlusion,
    Photometric,
}

/// Per-pixel attribute a report is binned by.
#[derive(Debug, Clone, Copy)]
pub enum AttributeSource<'a> {
    Flow(&'a FlowField),
    Scalar(&'a AttributeMap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub lower: f64,
    /// Open-ended bins have an infinite upper edge, stored as `null`.
    #[serde(with = "open_edge")]
    pub upper: f64,
    pub acc: ErrorAccumulator,
}

mod open_edge {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Bin {
    pub fn psnr_star(&self) -> Option<f64> {
        psnr_star(&self.acc).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub kind: AttributeKind,
    pub bins: Vec<Bin>,
}

impl BinnedReport {
    pub fn total(&self) -> ErrorAccumulator {
        self.bins.iter().map(|b| b.acc).sum()
    }

    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.acc.count()).sum()
    }

    /// Per-bin PSNR* minus the overall PSNR*; `None` for empty bins.
    pub fn deviations(&self) -> Vec<Option<f64>> {
        let overall = psnr_star(&self.total()).ok();
        self.bins
            .iter()
            .map(|b| Some(b.psnr_star()? - overall?))
            .collect()
    }

    /// Merges bin-wise; both reports must share kind and edges.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.kind != other.kind || self.bins.len() != other.bins.len() {
            return Err(MetricsError::Argument("incompatible binned reports".into()));
        }
        let bins = self
            .bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| Bin {
                acc: a.acc.merge(&b.acc),
                ..a.clone()
            })
            .collect();
        Ok(Self {
            kind: self.kind,
            bins,
        })
    }
}

/// Default bin edges. Magnitude edges are geometric in pixels, angle edges
/// split the circle into 36 sectors of 10 degrees starting at 0.
pub fn default_edges(kind: AttributeKind) -> Vec<f64> {
    match kind {
        AttributeKind::Magnitude => {
            let mut e = vec![0.0];
            e.extend((0..=8).map(|k| (1u32 << k) as f64));
            e.push(f64::INFINITY);
            e
        }
        AttributeKind::Angle => (0..=36).map(|k| k as f64 * 10.0).collect(),
        AttributeKind::Photometric => vec![0.0, 0.01, 0.02, 0.04, 0.08, 0.16, f64::INFINITY],
        AttributeKind::Occlusion => vec![0.0, 1.0, 2.0, 3.0],
    }
}

fn format_edge(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn empty_bins(edges: &[f64]) -> Vec<Bin> {
    edges
        .windows(2)
        .map(|w| Bin {
            label: format!("[{},{})", format_edge(w[0]), format_edge(w[1])),
            lower: w[0],
            upper: w[1],
            acc: ErrorAccumulator::new(),
        })
        .collect()
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(MetricsError::Argument("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::Argument(
            "bin edges must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Index of the bin `[e_k, e_{k+1})` containing `v`; values outside the
/// edge range fall into the first or last bin.
fn bin_index(edges: &[f64], v: f64) -> usize {
    let upper = edges.partition_point(|&e| e <= v);
    upper.saturating_sub(1).min(edges.len() - 2)
}

/// Motion direction in degrees within `[0, 360)`; zero motion maps to 0.
fn angle_degrees(v: [f32; 2]) -> f64 {
    let deg = (v[1] as f64).atan2(v[0] as f64).to_degrees();
    if deg < 0.0 {
        (deg + 360.0) % 360.0
    } else {
        deg
    }
}

pub fn split_by_occlusion(se: &AttributeMap, occ: &OcclusionMask) -> Result<BinnedReport> {
    if se.dims() != occ.dims() {
        return Err(MetricsError::Argument(format!(
            "error map is {:?} but occlusion mask is {:?}",
            se.dims(),
            occ.dims()
        )));
    }
    let mut bins: Vec<Bin> = ["0-occ", "1-occ", "2-occ"]
        .iter()
        .enumerate()
        .map(|(k, label)| Bin {
            label: label.to_string(),
            lower: k as f64,
            upper: k as f64 + 1.0,
            acc: ErrorAccumulator::new(),
        })
        .collect();
    for i in 0..se.len() {
        if let (Some(v), Some(class)) = (se.get(i), occ.get(i)) {
            bins[class as usize].acc.push(v);
        }
    }
    Ok(BinnedReport {
        kind: AttributeKind::Occlusion,
        bins,
    })
}

/// Bins squared errors by a per-pixel attribute. Magnitude and angle read a
/// flow field; photometric reads a scalar map. Pixels count only where both
/// the error and the attribute are valid.
pub fn bin_by_attribute(
    se: &AttributeMap,
    attribute: AttributeSource<'_>,
    kind: AttributeKind,
    edges: &[f64],
) -> Result<BinnedReport> {
    validate_edges(edges)?;
    let dims = match attribute {
        AttributeSource::Flow(f) => f.dims(),
        AttributeSource::Scalar(a) => a.dims(),
    };
    if dims != se.dims() {
        return Err(MetricsError::Argument(format!(
            "error map is {:?} but attribute is {dims:?}",
            se.dims()
        )));
    }
    let value_at = |i: usize| -> Option<f64> {
        match (kind, attribute) {
            (AttributeKind::Magnitude, AttributeSource::Flow(f)) => {
                f.get(i).map(|v| (v[0] as f64).hypot(v[1] as f64))
            }
            (AttributeKind::Angle, AttributeSource::Flow(f)) => f.get(i).map(angle_degrees),
            (AttributeKind::Photometric | AttributeKind::Occlusion, AttributeSource::Scalar(a)) => {
                a.get(i)
            }
            _ => None,
        }
    };
    match (kind, attribute) {
        (AttributeKind::Magnitude | AttributeKind::Angle, AttributeSource::Flow(_))
        | (AttributeKind::Photometric | AttributeKind::Occlusion, AttributeSource::Scalar(_)) => {}
        _ => {
            return Err(MetricsError::Argument(format!(
                "{kind:?} binning does not accept this attribute source"
            )))
        }
    }
    let mut bins = empty_bins(edges);
    for i in 0..se.len() {
        if let (Some(v), Some(a)) = (se.get(i), value_at(i)) {
            bins[bin_index(edges, a)].acc.push(v);
        }
    }
    Ok(BinnedReport { kind, bins })
}
