use std::fs;
use std::path::{Path, PathBuf};

use super::{HarnessError, Result};
use crate::imaging::{
    read_flow_file, read_image, AttributeMap, CodedImage, FlowField, OcclusionMask, Visibility,
};
use crate::synthgen::{tier_dir_name, SequenceManifest, TIMESTEP_COUNT};
use crate::Tier;

#[derive(Debug, Clone)]
pub struct SequenceEntry {
    /// Directory name, e.g. `seq_0003`.
    pub name: String,
    pub manifest: SequenceManifest,
}

/// Complete sequences found under a dataset root.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub sequences: Vec<SequenceEntry>,
    pub tiers: Vec<Tier>,
    /// Ground-truth frame indices `1..=7`.
    pub timesteps: Vec<usize>,
    /// `false` for participant exports, which carry only the two inputs.
    pub ground_truth: bool,
    /// Sequences skipped as incomplete, with the first missing file of each.
    pub skipped: Vec<(String, String)>,
}

fn required_files(ground_truth: bool) -> Vec<String> {
    let mut files = vec!["frame_0.png".to_string(), format!("frame_{}.png", TIMESTEP_COUNT - 1)];
    if ground_truth {
        for i in 1..TIMESTEP_COUNT - 1 {
            files.push(format!("frame_{i}.png"));
            files.push(format!("flow_t{i}_to_t0.flo"));
            files.push(format!("flow_t{i}_to_t8.flo"));
            files.push(format!("occ_t{i}.png"));
            files.push(format!("vis_t{i}.png"));
            files.push(format!("phot_t{i}.png"));
        }
    }
    files
}

fn first_gap(dir: &Path, manifest: &SequenceManifest) -> Option<String> {
    let files = required_files(!manifest.public);
    for tier in &manifest.tiers {
        let (w, h) = tier.dims(manifest.width, manifest.height);
        let res = tier_dir_name(w, h);
        for f in &files {
            if !dir.join(&res).join(f).is_file() {
                return Some(format!("{res}/{f}"));
            }
        }
    }
    None
}

/// Indexes the complete sequences under `root`; incomplete ones are logged
/// and listed in [`DatasetIndex::skipped`].
pub fn load_dataset(root: &Path) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(HarnessError::Dataset(format!("{} is not a directory", root.display())));
    }
    let mut dirs: Vec<(String, PathBuf)> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            (name.starts_with("seq_") && e.path().is_dir()).then(|| (name, e.path()))
        })
        .collect();
    dirs.sort();

    let mut sequences = Vec::new();
    let mut skipped = Vec::new();
    for (name, dir) in dirs {
        let manifest = match SequenceManifest::read(&dir.join("meta.json")) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("skipping {name}: unreadable meta.json ({e})");
                skipped.push((name, "meta.json".to_string()));
                continue;
            }
        };
        if let Some(gap) = first_gap(&dir, &manifest) {
            log::warn!("skipping {name}: missing {gap}");
            skipped.push((name, gap));
            continue;
        }
        sequences.push(SequenceEntry { name, manifest });
    }
    if sequences.is_empty() {
        return Err(HarnessError::Dataset(format!(
            "no complete sequences under {}",
            root.display()
        )));
    }
    let ground_truth = sequences.iter().all(|s| !s.manifest.public);
    let tiers = Tier::ALL
        .into_iter()
        .filter(|t| sequences.iter().all(|s| s.manifest.tiers.contains(t)))
        .collect();
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        sequences,
        tiers,
        timesteps: (1..TIMESTEP_COUNT - 1).collect(),
        ground_truth,
        skipped,
    })
}

impl DatasetIndex {
    pub fn sequence(&self, name: &str) -> Option<&SequenceEntry> {
        self.sequences.iter().find(|s| s.name == name)
    }

    pub fn tier_dims(&self, entry: &SequenceEntry, tier: Tier) -> (usize, usize) {
        tier.dims(entry.manifest.width, entry.manifest.height)
    }

    pub fn tier_dir(&self, entry: &SequenceEntry, tier: Tier) -> PathBuf {
        let (w, h) = self.tier_dims(entry, tier);
        self.root.join(&entry.name).join(tier_dir_name(w, h))
    }

    pub fn require_tier(&self, tier: Tier) -> Result<()> {
        if self.tiers.contains(&tier) {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("tier {tier} is not present in the dataset")))
        }
    }

    fn require_ground_truth(&self) -> Result<()> {
        if self.ground_truth {
            Ok(())
        } else {
            Err(HarnessError::Dataset(
                "dataset is a participant export without ground truth".into(),
            ))
        }
    }

    pub fn frame(&self, entry: &SequenceEntry, tier: Tier, index: usize) -> Result<CodedImage> {
        let path = self.tier_dir(entry, tier).join(format!("frame_{index}.png"));
        Ok(read_image(&fs::read(path)?)?)
    }

    pub fn flows(&self, entry: &SequenceEntry, tier: Tier, index: usize) -> Result<(FlowField, FlowField)> {
        self.require_ground_truth()?;
        let dir = self.tier_dir(entry, tier);
        let f0 = read_flow_file(&fs::read(dir.join(format!("flow_t{index}_to_t0.flo")))?)?;
        let f1 = read_flow_file(&fs::read(dir.join(format!("flow_t{index}_to_t8.flo")))?)?;
        Ok((f0, f1))
    }

    pub fn occlusion(&self, entry: &SequenceEntry, tier: Tier, index: usize) -> Result<OcclusionMask> {
        self.require_ground_truth()?;
        let path = self.tier_dir(entry, tier).join(format!("occ_t{index}.png"));
        Ok(OcclusionMask::decode_png(&fs::read(path)?)?)
    }

    pub fn visibility(&self, entry: &SequenceEntry, tier: Tier, index: usize) -> Result<Visibility> {
        self.require_ground_truth()?;
        let path = self.tier_dir(entry, tier).join(format!("vis_t{index}.png"));
        Ok(Visibility::decode_png(&fs::read(path)?)?)
    }

    pub fn photometric(&self, entry: &SequenceEntry, tier: Tier, index: usize) -> Result<AttributeMap> {
        self.require_ground_truth()?;
        let path = self.tier_dir(entry, tier).join(format!("phot_t{index}.png"));
        Ok(AttributeMap::decode_png(&fs::read(path)?)?)
    }
}
