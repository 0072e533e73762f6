use std::collections::HashMap;

use super::{MetricsError, Result};

/// Method labels with one score each.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    entries: Vec<(String, f64)>,
}

impl RankTable {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let entries: Vec<(String, f64)> = entries.into_iter().map(|(l, s)| (l.into(), s)).collect();
        let mut seen = std::collections::HashSet::new();
        for (label, score) in &entries {
            if !seen.insert(label.as_str()) {
                return Err(MetricsError::Argument(format!("duplicate label '{label}'")));
            }
            if !score.is_finite() {
                return Err(MetricsError::Argument(format!(
                    "score for '{label}' is not finite"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ascending ranks starting at 1; tied values share the mean of their ranks.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

/// Descending competition ranks: the best score is rank 1, ties share the
/// smaller rank and the following rank is skipped ("1, 1, 3").
pub fn competition_ranks(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .map(|&s| 1 + scores.iter().filter(|&&o| o > s).count())
        .collect()
}

/// Spearman's rank correlation: Pearson correlation of mid-ranks, paired
/// by label.
pub fn spearman_rho(xs: &RankTable, ys: &RankTable) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(MetricsError::Argument(format!(
            "tables have {} and {} entries",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(MetricsError::Argument("need at least two methods".into()));
    }
    let lookup: HashMap<&str, f64> = ys.entries.iter().map(|(l, s)| (l.as_str(), *s)).collect();
    let mut a = Vec::with_capacity(xs.len());
    let mut b = Vec::with_capacity(xs.len());
    for (label, score) in &xs.entries {
        let other = lookup
            .get(label.as_str())
            .ok_or_else(|| MetricsError::Argument(format!("label '{label}' missing")))?;
        a.push(*score);
        b.push(*other);
    }
    let (ra, rb) = (mid_ranks(&a), mid_ranks(&b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricsError::Undefined(
            "rank correlation of a constant column".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}
