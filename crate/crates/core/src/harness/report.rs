use std::fmt::Write as _;
use std::str::FromStr;

use super::evaluate::{FrameSummary, MetricsReport, REPORT_SCHEMA_VERSION};
use crate::metrics::competition_ranks;
use crate::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Plain,
    Csv,
    Latex,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "txt" | "text" => Ok(ReportFormat::Plain),
            "csv" => Ok(ReportFormat::Csv),
            "latex" | "tex" => Ok(ReportFormat::Latex),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl ReportFormat {
    /// Picks the format from an output file extension.
    pub fn from_extension(path: &std::path::Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

pub fn render_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Plain => plain(reports),
        ReportFormat::Csv => csv(reports),
        ReportFormat::Latex => latex(reports),
    }
}

fn db(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn plain(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    for (n, r) in reports.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        let mut kv = |k: String, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("schema_version".into(), REPORT_SCHEMA_VERSION.to_string());
        kv("toolkit_version".into(), r.toolkit_version.clone());
        kv("method".into(), r.method.clone());
        kv("ensembling".into(), r.ensembling.to_string());
        kv("digest".into(), r.digest.clone());
        for tier in &r.tiers {
            let p = format!("tier.{}", tier.tier);
            kv(format!("{p}.sequences"), tier.sequences.to_string());
            let mut summary = |scope: &str, s: &FrameSummary| {
                let q = format!("{p}.{scope}");
                kv(format!("{q}.frames"), s.frames.to_string());
                kv(format!("{q}.pixels"), s.pixels.to_string());
                kv(format!("{q}.all"), db(s.psnr_star));
                for k in 0..3 {
                    kv(format!("{q}.{k}-occ"), db(s.occlusion[k]));
                }
                kv(format!("{q}.sigma"), db(s.psnr_star_sigma));
                kv(format!("{q}.masked97"), db(s.masked_psnr_star));
            };
            summary("single", &tier.single_frame);
            if let Some(m) = &tier.multi_frame {
                summary("multi", m);
            }
            for s in &tier.timesteps {
                let q = format!("{p}.t{}", s.index);
                kv(format!("{q}.all"), db(s.psnr_star));
                kv(format!("{q}.sigma"), db(s.psnr_star_sigma));
            }
            for (q, v) in &tier.trimmed {
                kv(format!("{p}.trimmed.{q}"), db(*v));
            }
            for bin in &tier.magnitude.bins {
                kv(format!("{p}.magnitude.{}", bin.label), db(bin.psnr_star()));
            }
            for (bin, dev) in tier.angle.bins.iter().zip(tier.angle.deviations()) {
                kv(format!("{p}.angle_deviation.{}", bin.label), db(dev));
            }
            for bin in &tier.photometric.bins {
                kv(format!("{p}.photometric.{}", bin.label), db(bin.psnr_star()));
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn exact(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

pub(crate) const CSV_HEADER: &str =
    "method,ensembling,tier,scope,frames,pixels,all,occ0,occ1,occ2,sigma,masked97";

fn csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for tier in &r.tiers {
            let mut row = |scope: &str, s: &FrameSummary| {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    csv_field(&r.method),
                    r.ensembling,
                    tier.tier,
                    scope,
                    s.frames,
                    s.pixels,
                    exact(s.psnr_star),
                    exact(s.occlusion[0]),
                    exact(s.occlusion[1]),
                    exact(s.occlusion[2]),
                    exact(s.psnr_star_sigma),
                    exact(s.masked_psnr_star),
                );
            };
            row("single", &tier.single_frame);
            if let Some(m) = &tier.multi_frame {
                row("multi", m);
            }
        }
    }
    out
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '\\' => out.push_str("\\textbackslash{}"),
            _ => out.push(c),
        }
    }
    out
}

fn latex(reports: &[MetricsReport]) -> String {
    let tiers: Vec<Tier> = Tier::ALL
        .into_iter()
        .filter(|t| reports.iter().any(|r| r.tier(*t).is_some()))
        .collect();
    let n = reports.len();
    // Competition ranks per tier over the reports that have the tier.
    let ranks: Vec<Vec<Option<usize>>> = tiers
        .iter()
        .map(|&tier| {
            let scored: Vec<(usize, f64)> = reports
                .iter()
                .enumerate()
                .filter_map(|(i, r)| Some((i, r.tier(tier)?.single_frame.psnr_star?)))
                .collect();
            let ranks = competition_ranks(&scored.iter().map(|s| s.1).collect::<Vec<_>>());
            let mut out = vec![None; n];
            for ((i, _), r) in scored.iter().zip(ranks) {
                out[*i] = Some(r);
            }
            out
        })
        .collect();

    let mut out = String::new();
    let groups: Vec<String> = tiers
        .iter()
        .map(|t| format!("\\multicolumn{{5}}{{c}}{{{}}}", t.name().to_uppercase()))
        .collect();
    let _ = writeln!(out, " & {} \\\\", groups.join(" & "));
    let sub: Vec<&str> = tiers
        .iter()
        .map(|_| "rank & all & 0-occ. & 1-occ. & 2-occ.")
        .collect();
    let _ = writeln!(out, " & {} \\\\", sub.join(" & "));
    out.push_str("\\midrule\n");
    let two = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    for (i, r) in reports.iter().enumerate() {
        let mut cells = vec![if r.ensembling {
            format!("{} (ens.)", latex_escape(&r.method))
        } else {
            latex_escape(&r.method)
        }];
        for (k, &tier) in tiers.iter().enumerate() {
            match r.tier(tier) {
                Some(t) => {
                    let s = &t.single_frame;
                    cells.push(ranks[k][i].map_or_else(|| "-".into(), |r| format!("{r} / {n}")));
                    cells.push(two(s.psnr_star));
                    cells.extend(s.occlusion.iter().map(|v| two(*v)));
                }
                None => cells.extend(std::iter::repeat_n("-".to_string(), 5)),
            }
        }
        let _ = writeln!(out, "{} \\\\", cells.join(" & "));
    }
    out
}
