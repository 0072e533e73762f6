//! Reference interpolators used as fixtures and sanity bounds.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetIndex;
use super::evaluate::EvaluationPlan;
use super::submission::SubmissionMeta;
use super::{HarnessError, Result};
use crate::imaging::{write_image, FlowField, Visibility, WorkingImage};
use crate::synthgen::TIMESTEP_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    RepeatFirst,
    Blend,
    Oracle,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::RepeatFirst => "repeat_first",
            BaselineMode::Blend => "blend",
            BaselineMode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "repeat_first" | "repeat-first" => Ok(BaselineMode::RepeatFirst),
            "blend" => Ok(BaselineMode::Blend),
            "oracle" => Ok(BaselineMode::Oracle),
            other => Err(format!(
                "unknown baseline {other:?}; expected repeat_first, blend or oracle"
            )),
        }
    }
}

/// Ground truth the oracle consumes.
#[derive(Debug, Clone, Copy)]
pub struct OracleAux<'a> {
    pub flow_to_first: &'a FlowField,
    pub flow_to_second: &'a FlowField,
    pub visibility: &'a Visibility,
}

fn lerp(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    std::array::from_fn(|c| a[c] + t * (b[c] - a[c]))
}

pub fn baseline_interpolate(
    mode: BaselineMode,
    first: &WorkingImage,
    second: &WorkingImage,
    t: f64,
    aux: Option<OracleAux<'_>>,
) -> Result<WorkingImage> {
    if first.dims() != second.dims() {
        return Err(HarnessError::Config(format!(
            "input frames differ in size: {:?} vs {:?}",
            first.dims(),
            second.dims()
        )));
    }
    let (w, h) = first.dims();
    match mode {
        BaselineMode::RepeatFirst => Ok(first.clone()),
        BaselineMode::Blend => {
            let data = first
                .data()
                .iter()
                .zip(second.data())
                .map(|(&a, &b)| a + t as f32 * (b - a))
                .collect();
            Ok(WorkingImage::from_vec(w, h, data)?)
        }
        BaselineMode::Oracle => {
            let aux = aux.ok_or_else(|| {
                HarnessError::Config("the oracle baseline needs ground-truth flow and visibility".into())
            })?;
            if aux.flow_to_first.dims() != (w, h)
                || aux.flow_to_second.dims() != (w, h)
                || aux.visibility.dims() != (w, h)
            {
                return Err(HarnessError::Config(
                    "oracle annotations do not match the frame size".into(),
                ));
            }
            let mut out = WorkingImage::filled(w, h, [0.0; 3])?;
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let warp = |img: &WorkingImage, f: [f32; 2]| {
                        img.sample_bilinear(px + f[0] as f64, py + f[1] as f64)
                    };
                    let blend = lerp(first.pixel(x, y), second.pixel(x, y), t as f32);
                    let v = match (
                        aux.visibility.get(i),
                        aux.flow_to_first.get(i),
                        aux.flow_to_second.get(i),
                    ) {
                        (Some(0b11), Some(f0), Some(f1)) => {
                            let (a, b) = (warp(first, f0), warp(second, f1));
                            std::array::from_fn(|c| (a[c] + b[c]) * 0.5)
                        }
                        (Some(Visibility::FIRST), Some(f0), _) => warp(first, f0),
                        (Some(Visibility::SECOND), _, Some(f1)) => warp(second, f1),
                        _ => blend,
                    };
                    out.set_pixel(x, y, v);
                }
            }
            Ok(out)
        }
    }
}

/// Writes a complete submission directory produced by a baseline.
pub fn write_baseline_submission(
    index: &DatasetIndex,
    mode: BaselineMode,
    plan: &EvaluationPlan,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let single = plan.tiers.len() == 1;
    index.sequences.par_iter().try_for_each(|entry| -> Result<()> {
        for (tier, steps) in &plan.tiers {
            let dir = if single {
                out.join(&entry.name)
            } else {
                out.join(&entry.name).join(tier.name())
            };
            fs::create_dir_all(&dir)?;
            let first = index.frame(entry, *tier, 0)?.to_working();
            let second = index.frame(entry, *tier, TIMESTEP_COUNT - 1)?.to_working();
            for &i in steps {
                let t = i as f64 / 8.0;
                let pred = if mode == BaselineMode::Oracle {
                    let (f0, f1) = index.flows(entry, *tier, i)?;
                    let vis = index.visibility(entry, *tier, i)?;
                    let aux = OracleAux {
                        flow_to_first: &f0,
                        flow_to_second: &f1,
                        visibility: &vis,
                    };
                    baseline_interpolate(mode, &first, &second, t, Some(aux))?
                } else {
                    baseline_interpolate(mode, &first, &second, t, None)?
                };
                fs::write(dir.join(format!("pred_t{i}.png")), write_image(&pred.to_coded())?)?;
            }
        }
        Ok(())
    })?;
    fs::write(
        out.join("submission.json"),
        SubmissionMeta::new(mode.name(), false).to_json(),
    )?;
    Ok(())
}
