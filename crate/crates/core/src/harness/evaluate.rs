use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetIndex, SequenceEntry};
use super::submission::Submission;
use super::{HarnessError, Result};
use crate::imaging::{AttributeMap, FlowField};
use crate::metrics::{
    accumulate, bin_by_attribute, default_edges, nonlinearity_map, psnr_star, psnr_star_sigma,
    se_map, split_by_occlusion, top_fraction_mask, AttributeKind, AttributeSource, BinnedReport,
    ErrorAccumulator,
};
use crate::Tier;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Share of most non-linear pixels left out of the masked variant.
pub const MASKED_FRACTION: f64 = 0.03;
/// Shares of highest-error pixels dropped for the trimmed PSNR* figures.
pub const TRIM_FRACTIONS: [f64; 3] = [0.01, 0.03, 0.10];
/// Frame index of `t = 0.5`.
const CENTER: usize = 4;

/// Which ground-truth frames are evaluated at which tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub tiers: Vec<(Tier, Vec<usize>)>,
}

impl EvaluationPlan {
    /// All seven frames at the 1K tier, the center frame elsewhere.
    pub fn default_for(tiers: &[Tier]) -> Self {
        let mut tiers = tiers.to_vec();
        tiers.sort();
        tiers.dedup();
        Self {
            tiers: tiers
                .into_iter()
                .map(|t| {
                    let steps = if t == Tier::Quarter {
                        (1..=7).collect()
                    } else {
                        vec![CENTER]
                    };
                    (t, steps)
                })
                .collect(),
        }
    }

    pub fn single_frame(tiers: &[Tier]) -> Self {
        let mut tiers = tiers.to_vec();
        tiers.sort();
        tiers.dedup();
        Self {
            tiers: tiers.into_iter().map(|t| (t, vec![CENTER])).collect(),
        }
    }

    pub fn timesteps(&self, tier: Tier) -> Option<&[usize]> {
        self.tiers
            .iter()
            .find(|(t, _)| *t == tier)
            .map(|(_, s)| s.as_slice())
    }

    fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(HarnessError::Config("no tiers to evaluate".into()));
        }
        for (tier, steps) in &self.tiers {
            if !steps.contains(&CENTER) {
                return Err(HarnessError::Config(format!(
                    "tier {tier}: the center frame t4 must be evaluated"
                )));
            }
            if steps.iter().any(|s| !(1..=7).contains(s)) {
                return Err(HarnessError::Config(format!(
                    "tier {tier}: timesteps must lie in 1..=7"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepReport {
    pub index: usize,
    pub t: f64,
    pub psnr_star: Option<f64>,
    pub psnr_star_sigma: Option<f64>,
    /// PSNR* on 0-, 1- and 2-occluded pixels.
    pub occlusion: [Option<f64>; 3],
    pub masked_psnr_star: Option<f64>,
    pub all: ErrorAccumulator,
    pub by_occlusion: [ErrorAccumulator; 3],
    pub masked: ErrorAccumulator,
}

/// Headline numbers for one frame set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frames: usize,
    pub psnr_star: Option<f64>,
    /// For several timesteps, the mean of the per-timestep values.
    pub psnr_star_sigma: Option<f64>,
    pub occlusion: [Option<f64>; 3],
    pub masked_psnr_star: Option<f64>,
    pub pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tier: Tier,
    pub sequences: usize,
    pub timesteps: Vec<TimestepReport>,
    pub single_frame: FrameSummary,
    pub multi_frame: Option<FrameSummary>,
    /// Center-frame PSNR* binned by `F_{t→0}` magnitude and angle and by
    /// photometric change.
    pub magnitude: BinnedReport,
    pub angle: BinnedReport,
    pub photometric: BinnedReport,
    /// `(fraction, PSNR*)` after dropping the highest-error pixels of each
    /// center frame.
    pub trimmed: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub method: String,
    pub ensembling: bool,
    pub digest: String,
    pub tiers: Vec<TierReport>,
}

impl MetricsReport {
    pub fn tier(&self, tier: Tier) -> Option<&TierReport> {
        self.tiers.iter().find(|t| t.tier == tier)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data");
        s.push('\n');
        s
    }
}

/// Nonlinearity scores normalized for time `t`: `‖F_{t→0}/(2t) + F_{t→1}/(2(1−t))‖`,
/// which is `‖F_{t→0} + F_{t→1}‖` at the center frame.
pub fn nonlinearity_for(to_first: &FlowField, to_second: &FlowField, t: f64) -> Result<AttributeMap> {
    let a = to_first.scaled((0.5 / t) as f32);
    let b = to_second.scaled((0.5 / (1.0 - t)) as f32);
    Ok(nonlinearity_map(&a, &b)?)
}

struct StepPartial {
    all: ErrorAccumulator,
    occ: [ErrorAccumulator; 3],
    masked: ErrorAccumulator,
}

struct TierPartial {
    steps: Vec<StepPartial>,
    magnitude: BinnedReport,
    angle: BinnedReport,
    photometric: BinnedReport,
    trimmed: Vec<ErrorAccumulator>,
}

fn evaluate_sequence(
    sub: &Submission,
    index: &DatasetIndex,
    entry: &SequenceEntry,
    tier: Tier,
    steps: &[usize],
) -> Result<TierPartial> {
    let mut partial_steps = Vec::with_capacity(steps.len());
    let mut center = None;
    for &i in steps {
        let gt = index.frame(entry, tier, i)?.to_working();
        let pred = sub.frame(&entry.name, tier, i)?.to_working();
        let occ = index.occlusion(entry, tier, i)?;
        let se = se_map(&pred, &gt)?.restricted(occ.valid());
        let (f0, f1) = index.flows(entry, tier, i)?;
        let t = i as f64 / 8.0;
        let all = accumulate(ErrorAccumulator::new(), &se, None);
        let split = split_by_occlusion(&se, &occ)?;
        let keep = top_fraction_mask(&nonlinearity_for(&f0, &f1, t)?, MASKED_FRACTION)?;
        let masked = accumulate(ErrorAccumulator::new(), &se, Some(&keep));
        partial_steps.push(StepPartial {
            all,
            occ: [split.bins[0].acc, split.bins[1].acc, split.bins[2].acc],
            masked,
        });
        if i == CENTER {
            let phot = index.photometric(entry, tier, i)?;
            let bin = |source, kind| bin_by_attribute(&se, source, kind, &default_edges(kind));
            let mut trimmed = Vec::new();
            for q in TRIM_FRACTIONS {
                let keep = top_fraction_mask(&se, q)?;
                trimmed.push(accumulate(ErrorAccumulator::new(), &se, Some(&keep)));
            }
            center = Some((
                bin(AttributeSource::Flow(&f0), AttributeKind::Magnitude)?,
                bin(AttributeSource::Flow(&f0), AttributeKind::Angle)?,
                bin(AttributeSource::Scalar(&phot), AttributeKind::Photometric)?,
                trimmed,
            ));
        }
    }
    let (magnitude, angle, photometric, trimmed) = center.expect("plan includes the center frame");
    Ok(TierPartial {
        steps: partial_steps,
        magnitude,
        angle,
        photometric,
        trimmed,
    })
}

fn merge(a: TierPartial, b: &TierPartial) -> Result<TierPartial> {
    Ok(TierPartial {
        steps: a
            .steps
            .iter()
            .zip(&b.steps)
            .map(|(x, y)| StepPartial {
                all: x.all.merge(&y.all),
                occ: std::array::from_fn(|k| x.occ[k].merge(&y.occ[k])),
                masked: x.masked.merge(&y.masked),
            })
            .collect(),
        magnitude: a.magnitude.merge(&b.magnitude)?,
        angle: a.angle.merge(&b.angle)?,
        photometric: a.photometric.merge(&b.photometric)?,
        trimmed: a
            .trimmed
            .iter()
            .zip(&b.trimmed)
            .map(|(x, y)| x.merge(y))
            .collect(),
    })
}

fn summary(steps: &[&TimestepReport]) -> FrameSummary {
    let pool = |f: &dyn Fn(&TimestepReport) -> ErrorAccumulator| -> ErrorAccumulator {
        steps.iter().map(|s| f(s)).sum()
    };
    let all = pool(&|s| s.all);
    let sigmas: Option<Vec<f64>> = steps.iter().map(|s| s.psnr_star_sigma).collect();
    FrameSummary {
        frames: steps.len(),
        psnr_star: psnr_star(&all).ok(),
        psnr_star_sigma: sigmas.map(|v| v.iter().sum::<f64>() / v.len() as f64),
        occlusion: std::array::from_fn(|k| psnr_star(&pool(&|s| s.by_occlusion[k])).ok()),
        masked_psnr_star: psnr_star(&pool(&|s| s.masked)).ok(),
        pixels: all.count(),
    }
}

/// Scores a validated submission against the ground truth. Sequences are
/// evaluated in parallel and merged in dataset order, so the report is a
/// deterministic function of its inputs.
pub fn evaluate_submission(sub: &Submission, index: &DatasetIndex) -> Result<MetricsReport> {
    if !index.ground_truth {
        return Err(HarnessError::Dataset(
            "cannot evaluate against a participant export".into(),
        ));
    }
    let plan = &sub.plan;
    plan.validate()?;
    let mut tiers = Vec::new();
    for (tier, steps) in &plan.tiers {
        index.require_tier(*tier)?;
        let partials: Vec<TierPartial> = index
            .sequences
            .par_iter()
            .map(|entry| evaluate_sequence(sub, index, entry, *tier, steps))
            .collect::<Result<_>>()?;
        let mut iter = partials.into_iter();
        let first = iter.next().expect("dataset has sequences");
        let total = iter.try_fold(first, |acc, p| merge(acc, &p))?;

        let timesteps: Vec<TimestepReport> = steps
            .iter()
            .zip(&total.steps)
            .map(|(&i, s)| TimestepReport {
                index: i,
                t: i as f64 / 8.0,
                psnr_star: psnr_star(&s.all).ok(),
                psnr_star_sigma: psnr_star_sigma(&s.all).ok(),
                occlusion: std::array::from_fn(|k| psnr_star(&s.occ[k]).ok()),
                masked_psnr_star: psnr_star(&s.masked).ok(),
                all: s.all,
                by_occlusion: s.occ,
                masked: s.masked,
            })
            .collect();
        let center = timesteps
            .iter()
            .find(|s| s.index == CENTER)
            .expect("validated plan");
        let single_frame = summary(&[center]);
        let multi_frame = (timesteps.len() > 1).then(|| summary(&timesteps.iter().collect::<Vec<_>>()));
        tiers.push(TierReport {
            tier: *tier,
            sequences: index.sequences.len(),
            single_frame,
            multi_frame,
            magnitude: total.magnitude,
            angle: total.angle,
            photometric: total.photometric,
            trimmed: TRIM_FRACTIONS
                .iter()
                .zip(&total.trimmed)
                .map(|(&q, acc)| (q, psnr_star(acc).ok()))
                .collect(),
            timesteps,
        });
    }
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        toolkit_version: crate::TOOLKIT_VERSION.to_string(),
        method: sub.method.clone(),
        ensembling: sub.ensembling,
        digest: sub.digest.clone(),
        tiers,
    })
}
