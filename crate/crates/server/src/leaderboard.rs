use std::str::FromStr;

use fibench_core::harness::MetricsReport;
use fibench_core::Tier;
use serde::{Deserialize, Serialize};

use crate::store::{State, SubmissionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    /// PSNR* over all pixels of the center frame.
    Single,
    /// PSNR* pooled over every evaluated timestep.
    Multi,
    /// Center-frame PSNR* on the 97% most linear pixels.
    Masked,
}

impl FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(SortKey::Single),
            "multi" => Ok(SortKey::Multi),
            "masked" => Ok(SortKey::Masked),
            other => Err(format!("unknown sort key {other:?}")),
        }
    }
}

impl SortKey {
    pub fn score(self, report: &MetricsReport, tier: Tier) -> Option<f64> {
        let t = report.tier(tier)?;
        match self {
            SortKey::Single => t.single_frame.psnr_star,
            SortKey::Multi => t.multi_frame.as_ref()?.psnr_star,
            SortKey::Masked => t.single_frame.masked_psnr_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub id: String,
    pub method: String,
    pub ensembling: bool,
    pub score: f64,
    pub received_ms: u64,
    pub link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub ensembling: bool,
    pub entries: Vec<LeaderboardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub schema_version: u32,
    pub tier: Tier,
    pub sort: SortKey,
    /// Non-ensembled results first, then ensembled ones.
    pub sections: Vec<Section>,
}

/// Completed records with a score, sorted descending within each section;
/// equal scores keep submission order.
pub fn build_leaderboard(records: &[SubmissionRecord], tier: Tier, sort: SortKey) -> Leaderboard {
    let sections = [false, true]
        .into_iter()
        .map(|ensembling| {
            let mut scored: Vec<(&SubmissionRecord, f64)> = records
                .iter()
                .filter(|r| r.state == State::Done && r.ensembling == ensembling)
                .filter_map(|r| Some((r, sort.score(r.report.as_ref()?, tier)?)))
                .collect();
            scored.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then(a.0.received_ms.cmp(&b.0.received_ms))
                    .then(a.0.sequence.cmp(&b.0.sequence))
            });
            Section {
                ensembling,
                entries: scored
                    .into_iter()
                    .enumerate()
                    .map(|(i, (r, score))| LeaderboardEntry {
                        rank: i + 1,
                        id: r.id.clone(),
                        method: r.method.clone(),
                        ensembling,
                        score,
                        received_ms: r.received_ms,
                        link: format!("/api/v1/submissions/{}", r.id),
                    })
                    .collect(),
            }
        })
        .collect();
    Leaderboard {
        schema_version: 1,
        tier,
        sort,
        sections,
    }
}
