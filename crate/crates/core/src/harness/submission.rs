use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::DatasetIndex;
use super::evaluate::EvaluationPlan;
use super::{ErrorCode, HarnessError, Result};
use crate::imaging::{png_info, read_image, CodedImage};
use crate::Tier;

const METADATA_FILE: &str = "submission.json";

/// Method label and ensembling disclosure. The flag has no default: a
/// submission that does not state it is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionMeta {
    pub method: String,
    pub ensembling: Option<bool>,
}

impl SubmissionMeta {
    pub fn new(method: impl Into<String>, ensembling: bool) -> Self {
        Self {
            method: method.into(),
            ensembling: Some(ensembling),
        }
    }

    /// Parses `{"method": "...", "ensembling": true|false}`. A missing or
    /// non-boolean flag parses to `None`.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
            HarnessError::validation(ErrorCode::MalformedFile, format!("{METADATA_FILE}: {e}"))
        })?;
        let method = value
            .get("method")
            .and_then(|m| m.as_str())
            .unwrap_or("")
            .trim()
            .to_string();
        Ok(Self {
            method,
            ensembling: value.get("ensembling").and_then(|f| f.as_bool()),
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut text = serde_json::to_string_pretty(self).expect("plain struct");
        text.push('\n');
        text.into_bytes()
    }
}

/// Submission files keyed by `/`-separated relative path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Payload {
    files: BTreeMap<String, Vec<u8>>,
    metadata: Option<SubmissionMeta>,
}

impl Payload {
    pub fn from_files(files: BTreeMap<String, Vec<u8>>) -> Self {
        let mut p = Self {
            files,
            metadata: None,
        };
        p.strip_wrapper();
        p
    }

    /// Reads a submission directory recursively.
    pub fn from_dir(root: &Path) -> Result<Self> {
        fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) -> Result<()> {
            for entry in fs::read_dir(dir)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                let rel = if prefix.is_empty() {
                    name
                } else {
                    format!("{prefix}/{name}")
                };
                let path = entry.path();
                if path.is_dir() {
                    walk(&path, &rel, out)?;
                } else {
                    out.insert(rel, fs::read(&path)?);
                }
            }
            Ok(())
        }
        let mut files = BTreeMap::new();
        walk(root, "", &mut files)?;
        Ok(Self::from_files(files))
    }

    /// Reads a zip archive, refusing to inflate more than `max_bytes`.
    pub fn from_zip(bytes: &[u8], max_bytes: u64) -> Result<Self> {
        let malformed = |e: zip::result::ZipError| {
            HarnessError::validation(ErrorCode::MalformedArchive, e.to_string())
        };
        let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(malformed)?;
        let mut files = BTreeMap::new();
        let mut total = 0u64;
        for i in 0..archive.len() {
            let mut file = archive.by_index(i).map_err(malformed)?;
            if file.is_dir() {
                continue;
            }
            let name = file.name().trim_start_matches("./").to_string();
            if name.split('/').any(|c| c == "..") || name.starts_with('/') {
                return Err(HarnessError::validation(
                    ErrorCode::MalformedArchive,
                    format!("unsafe entry path {name:?}"),
                ));
            }
            let declared = file.size();
            total = total.saturating_add(declared);
            if total > max_bytes {
                return Err(HarnessError::validation(
                    ErrorCode::PayloadTooLarge,
                    format!("archive inflates beyond {max_bytes} bytes"),
                ));
            }
            let mut data = Vec::with_capacity(declared as usize);
            // Declared sizes can lie; cap the actual read as well.
            (&mut file)
                .take(declared + 1)
                .read_to_end(&mut data)
                .map_err(|e| HarnessError::validation(ErrorCode::MalformedArchive, e.to_string()))?;
            if data.len() as u64 != declared {
                return Err(HarnessError::validation(
                    ErrorCode::MalformedArchive,
                    format!("entry {name} has inconsistent size"),
                ));
            }
            files.insert(name, data);
        }
        Ok(Self::from_files(files))
    }

    /// A directory or a zip file.
    pub fn from_path(path: &Path, max_bytes: u64) -> Result<Self> {
        if path.is_dir() {
            Self::from_dir(path)
        } else {
            Self::from_zip(&fs::read(path)?, max_bytes)
        }
    }

    /// Deterministic archive: sorted entries, fixed timestamps. Out-of-band
    /// metadata is written as `submission.json`.
    pub fn to_zip(&self) -> Vec<u8> {
        let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let options = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default())
            .unix_permissions(0o644);
        let meta = self.metadata.as_ref().map(SubmissionMeta::to_json);
        let mut files: BTreeMap<&str, &[u8]> =
            self.files.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        if let Some(m) = &meta {
            files.insert(METADATA_FILE, m);
        }
        for (name, data) in files {
            writer.start_file(name, options).expect("in-memory write");
            writer.write_all(data).expect("in-memory write");
        }
        writer.finish().expect("in-memory write").into_inner()
    }

    /// Drops a single enclosing directory, as produced by zipping a folder.
    fn strip_wrapper(&mut self) {
        if self.files.contains_key(METADATA_FILE) || self.files.is_empty() {
            return;
        }
        let first = |k: &str| k.split('/').next().unwrap_or("").to_string();
        let top = first(self.files.keys().next().expect("non-empty"));
        if top.starts_with("seq_")
            || !self
                .files
                .keys()
                .all(|k| k.contains('/') && first(k) == top)
        {
            return;
        }
        let cut = top.len() + 1;
        self.files = std::mem::take(&mut self.files)
            .into_iter()
            .map(|(k, v)| (k[cut..].to_string(), v))
            .collect();
    }

    /// Metadata supplied out of band (for example by an upload form). It
    /// takes precedence over `submission.json`.
    pub fn set_metadata(&mut self, meta: SubmissionMeta) {
        self.metadata = Some(meta);
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(|v| v.as_slice())
    }

    pub fn total_bytes(&self) -> u64 {
        self.files.values().map(|v| v.len() as u64).sum()
    }

    fn effective_metadata(&self) -> Result<SubmissionMeta> {
        let from_file = self.get(METADATA_FILE).map(SubmissionMeta::parse).transpose()?;
        let mut meta = match (&self.metadata, from_file) {
            (Some(m), Some(f)) => SubmissionMeta {
                method: if m.method.is_empty() { f.method } else { m.method.clone() },
                ensembling: m.ensembling.or(f.ensembling),
            },
            (Some(m), None) => m.clone(),
            (None, Some(f)) => f,
            (None, None) => {
                return Err(HarnessError::validation(
                    ErrorCode::NoEnsembleFlag,
                    format!("no {METADATA_FILE} and no metadata; the ensembling flag is required"),
                ))
            }
        };
        if meta.ensembling.is_none() {
            return Err(HarnessError::validation(
                ErrorCode::NoEnsembleFlag,
                "the ensembling flag must be stated as true or false",
            ));
        }
        if meta.method.is_empty() {
            meta.method = "unnamed".into();
        }
        Ok(meta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationWarning {
    pub code: ErrorCode,
    pub message: String,
}

/// A payload that passed validation against a dataset and plan.
#[derive(Debug, Clone)]
pub struct Submission {
    pub method: String,
    pub ensembling: bool,
    /// Hex SHA-256 over every payload file and the effective metadata.
    pub digest: String,
    pub plan: EvaluationPlan,
    pub warnings: Vec<ValidationWarning>,
    payload: Payload,
    frames: BTreeMap<(String, Tier, usize), String>,
}

impl Submission {
    pub fn frame(&self, sequence: &str, tier: Tier, index: usize) -> Result<CodedImage> {
        let path = self
            .frames
            .get(&(sequence.to_string(), tier, index))
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "submission has no frame for {sequence} tier {tier} t{index}"
                ))
            })?;
        Ok(read_image(self.payload.get(path).expect("validated path"))?)
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }
}

fn digest(payload: &Payload, meta: &SubmissionMeta) -> String {
    let mut h = Sha256::new();
    for (name, data) in &payload.files {
        h.update(name.as_bytes());
        h.update([0]);
        h.update((data.len() as u64).to_le_bytes());
        h.update(data);
    }
    h.update(b"method\0");
    h.update(meta.method.as_bytes());
    h.update([0, meta.ensembling.unwrap_or(false) as u8]);
    hex::encode(h.finalize())
}

/// Candidate paths of a predicted frame: `seq_<id>/<tier>/pred_t<i>.png`,
/// and `seq_<id>/pred_t<i>.png` when only one tier is evaluated.
fn frame_paths(sequence: &str, tier: Tier, index: usize, single_tier: bool) -> Vec<String> {
    let mut paths = vec![format!("{sequence}/{tier}/pred_t{index}.png")];
    if single_tier {
        paths.push(format!("{sequence}/pred_t{index}.png"));
    }
    paths
}

/// Checks coverage, dimensions and bit depth of every required frame and
/// the ensembling disclosure. The first problem found, in sequence / tier /
/// timestep order, is returned with its code; unexpected files only warn.
pub fn validate_submission(payload: Payload, index: &DatasetIndex, plan: &EvaluationPlan) -> Result<Submission> {
    let meta = payload.effective_metadata()?;
    for (tier, _) in &plan.tiers {
        index.require_tier(*tier)?;
    }
    let single = plan.tiers.len() == 1;
    let mut frames = BTreeMap::new();
    let mut required = Vec::new();
    for entry in &index.sequences {
        for (tier, steps) in &plan.tiers {
            let dims = index.tier_dims(entry, *tier);
            for &i in steps {
                let found = frame_paths(&entry.name, *tier, i, single)
                    .into_iter()
                    .find(|p| payload.files.contains_key(p));
                let Some(path) = found else {
                    return Err(HarnessError::validation(
                        ErrorCode::MissingFrame,
                        format!("{} tier {tier} timestep {i}: no pred_t{i}.png", entry.name),
                    ));
                };
                frames.insert((entry.name.clone(), *tier, i), path.clone());
                required.push((entry.name.clone(), *tier, i, path, dims));
            }
        }
    }

    let problems: Vec<Option<HarnessError>> = required
        .par_iter()
        .map(|(seq, tier, i, path, (w, h))| {
            let bytes = payload.get(path).expect("present");
            let what = format!("{seq} tier {tier} timestep {i}");
            let info = match png_info(bytes) {
                Ok(info) => info,
                Err(e) => {
                    return Some(HarnessError::validation(
                        ErrorCode::MalformedFile,
                        format!("{what}: {e}"),
                    ))
                }
            };
            if info.bit_depth != 8 || info.channels != 3 {
                return Some(HarnessError::validation(
                    ErrorCode::BadBitdepth,
                    format!(
                        "{what}: expected 8-bit RGB, found {} channel(s) at {} bits",
                        info.channels, info.bit_depth
                    ),
                ));
            }
            if (info.width, info.height) != (*w, *h) {
                return Some(HarnessError::validation(
                    ErrorCode::BadDimensions,
                    format!("{what}: expected {w}x{h}, found {}x{}", info.width, info.height),
                ));
            }
            read_image(bytes)
                .err()
                .map(|e| HarnessError::validation(ErrorCode::MalformedFile, format!("{what}: {e}")))
        })
        .collect();
    if let Some(err) = problems.into_iter().flatten().next() {
        return Err(err);
    }

    let used: std::collections::BTreeSet<&String> = frames.values().collect();
    let extras: Vec<&String> = payload
        .files
        .keys()
        .filter(|k| k.as_str() != METADATA_FILE && !used.contains(k))
        .collect();
    let mut warnings = Vec::new();
    if !extras.is_empty() {
        let shown: Vec<&str> = extras.iter().take(5).map(|s| s.as_str()).collect();
        let message = format!(
            "{} unexpected file(s) ignored: {}{}",
            extras.len(),
            shown.join(", "),
            if extras.len() > 5 { ", ..." } else { "" }
        );
        log::warn!("{}: {message}", ErrorCode::ExtraFiles);
        warnings.push(ValidationWarning {
            code: ErrorCode::ExtraFiles,
            message,
        });
    }

    Ok(Submission {
        method: meta.method.clone(),
        ensembling: meta.ensembling.expect("checked"),
        digest: digest(&payload, &meta),
        plan: plan.clone(),
        warnings,
        payload,
        frames,
    })
}
