use super::{MetricsError, Result};
use crate::imaging::{AttributeMap, FlowField};

/// `‖F_a + F_b‖₂` per pixel. Under linear motion the flows from the center
/// frame to its two inputs cancel, so the score is zero.
pub fn nonlinearity_map(a: &FlowField, b: &FlowField) -> Result<AttributeMap> {
    if a.dims() != b.dims() {
        return Err(MetricsError::Argument(format!(
            "flow fields differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut values = Vec::with_capacity(a.len());
    let mut valid = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        match (a.get(i), b.get(i)) {
            (Some(u), Some(v)) => {
                values.push(((u[0] + v[0]) as f64).hypot((u[1] + v[1]) as f64));
                valid.push(true);
            }
            _ => {
                values.push(0.0);
                valid.push(false);
            }
        }
    }
    AttributeMap::with_validity(a.width(), a.height(), values, valid)
        .map_err(|e| MetricsError::Argument(e.to_string()))
}

/// Mask keeping all valid pixels except the `floor(q · M_valid)` with the
/// highest scores. Among equal scores the higher row-major index is dropped
/// first.
pub fn top_fraction_mask(scores: &AttributeMap, q: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&q) {
        return Err(MetricsError::Argument(format!(
            "fraction {q} must lie in [0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores.valid()[i]).collect();
    let drop = (q * order.len() as f64).floor() as usize;
    let values = scores.values();
    order.sort_unstable_by(|&i, &j| values[j].total_cmp(&values[i]).then(j.cmp(&i)));
    let mut keep = scores.valid().to_vec();
    for &i in &order[..drop] {
        keep[i] = false;
    }
    Ok(keep)
}
