//! Sequence rendering, the on-disk dataset layout and public exports.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{annotate, Annotations};
use super::rng::sequence_seed;
use super::scene::{sample_scene, timestep, Layer, SceneConfig, SceneSpec, TIMESTEP_COUNT};
use super::sprite::SpriteSource;
use super::transform::{GeometricTransform, PhotometricTransform};
use super::GenerationError;
use crate::imaging::{
    resize_antialiased, write_flow_file, write_image, AttributeMap, Kernel, Visibility,
    WorkingImage, INVALID_CLASS,
};
use crate::Tier;

pub const MANIFEST_VERSION: u32 = 1;
/// Sequences with a larger share of failed inversions are rejected.
pub const MAX_INVERSION_FAILURE_FRACTION: f64 = 1e-3;
const MAX_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub z: usize,
    pub sprite: SpriteSource,
    pub start: GeometricTransform,
    pub end: GeometricTransform,
    pub photometric_start: PhotometricTransform,
    pub photometric_end: PhotometricTransform,
}

/// Contents of `meta.json`. The full manifest regenerates the sequence; the
/// public variant keeps only what participants need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub format_version: u32,
    pub toolkit_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub width: usize,
    pub height: usize,
    pub timesteps: usize,
    pub tiers: Vec<Tier>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerManifest>,
    #[serde(default)]
    pub public: bool,
}

impl SequenceManifest {
    pub fn for_scene(scene: &SceneSpec) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            toolkit_version: crate::TOOLKIT_VERSION.to_string(),
            seed: Some(scene.seed),
            width: scene.width,
            height: scene.height,
            timesteps: TIMESTEP_COUNT,
            tiers: Tier::ALL.to_vec(),
            layers: scene
                .layers
                .iter()
                .enumerate()
                .map(|(z, l)| LayerManifest {
                    z,
                    sprite: l.source.clone(),
                    start: l.start,
                    end: l.end,
                    photometric_start: l.photometric_start,
                    photometric_end: l.photometric_end,
                })
                .collect(),
            public: false,
        }
    }

    pub fn stripped(&self) -> Self {
        Self {
            seed: None,
            layers: Vec::new(),
            public: true,
            ..self.clone()
        }
    }

    pub fn read(path: &Path) -> Result<Self, GenerationError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, path: &Path) -> Result<(), GenerationError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Rebuilds a scene from a full manifest.
pub fn scene_from_manifest(manifest: &SequenceManifest) -> Result<SceneSpec, GenerationError> {
    if manifest.public || manifest.layers.is_empty() {
        return Err(GenerationError::InvalidScene(
            "manifest carries no layer transforms".into(),
        ));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for lm in &manifest.layers {
        layers.push(
            Layer::new(lm.sprite.build()?, lm.sprite.clone(), lm.start, lm.end)
                .with_photometric(lm.photometric_start, lm.photometric_end),
        );
    }
    SceneSpec::from_layers(
        manifest.seed.unwrap_or(0),
        manifest.width,
        manifest.height,
        layers,
    )
}

pub fn sequence_dir_name(id: usize) -> String {
    format!("seq_{id:04}")
}

pub fn tier_dir_name(width: usize, height: usize) -> String {
    format!("res_{width}x{height}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSummary {
    pub tier: Tier,
    pub width: usize,
    pub height: usize,
    pub directory: PathBuf,
    /// Occlusion class counts for each ground-truth frame `t = 1/8 … 7/8`.
    pub occlusion_counts: Vec<[u64; 3]>,
    pub invalid_pixels: Vec<u64>,
}

/// What [`generate_sequence`] wrote: the manifest and one summary per tier.
/// Pixel data stays on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceBundle {
    pub directory: PathBuf,
    pub manifest: SequenceManifest,
    pub tiers: Vec<TierSummary>,
    pub inversion_failure_fraction: f64,
}

/// Annotations for a lower tier: image by anti-aliased resize of the full
/// frame, flows evaluated analytically at the tier's sample points, and
/// visibility and photometric maps aggregated over each `k×k` block.
pub fn tier_annotations(scene: &SceneSpec, full: &Annotations, tier: Tier) -> Annotations {
    let k = tier.factor();
    if k == 1 {
        return full.clone();
    }
    let (w, h) = tier.dims(scene.width, scene.height);
    let analytic = annotate(scene, full.t, k);
    let image = resize_antialiased(&full.image, w, h, Kernel::Lanczos3)
        .expect("tier dimensions are positive");

    let fw = scene.width;
    let mut bits = Vec::with_capacity(w * h);
    let mut phot = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let mut votes = [0usize; 4];
            let (mut n, mut sum) = (0usize, 0.0);
            for y in j * k..(j + 1) * k {
                for x in i * k..(i + 1) * k {
                    let idx = y * fw + x;
                    if let Some(b) = full.visibility.get(idx) {
                        votes[b as usize] += 1;
                        n += 1;
                        sum += full.photometric.values()[idx];
                    }
                }
            }
            if 2 * n > k * k {
                // Most votes wins; ties go to the more occluded state.
                let best = (0..4)
                    .max_by_key(|&b| (votes[b], 2 - (b as u8).count_ones(), std::cmp::Reverse(b)))
                    .expect("four states");
                bits.push(best as u8);
                phot.push(sum / n as f64);
                valid.push(true);
            } else {
                bits.push(INVALID_CLASS);
                phot.push(0.0);
                valid.push(false);
            }
        }
    }
    Annotations {
        t: full.t,
        image,
        flow_to_first: analytic.flow_to_first,
        flow_to_second: analytic.flow_to_second,
        visibility: Visibility::from_raw(w, h, bits).expect("bits are in range"),
        photometric: AttributeMap::with_validity(w, h, phot, valid).expect("finite values"),
        inversion_failures: analytic.inversion_failures,
    }
}

fn write_png(path: &Path, image: &WorkingImage) -> Result<(), GenerationError> {
    fs::write(path, write_image(&image.to_coded())?)?;
    Ok(())
}

/// Renders all nine frames and their annotations at every tier and writes
/// the sequence directory. Output goes to a sibling temporary directory that
/// is renamed into place, so a partial sequence never appears at `out_dir`.
pub fn generate_sequence(
    scene: &SceneSpec,
    out_dir: &Path,
) -> Result<SequenceBundle, GenerationError> {
    if out_dir.exists() {
        return Err(GenerationError::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} already exists", out_dir.display()),
        )));
    }
    let full: Vec<Annotations> = (0..TIMESTEP_COUNT)
        .map(|i| annotate(scene, timestep(i), 1))
        .collect();
    let samples = (scene.width * scene.height * TIMESTEP_COUNT) as f64;
    let failures: usize = full.iter().map(|a| a.inversion_failures).sum();
    let fraction = failures as f64 / samples;
    if fraction > MAX_INVERSION_FAILURE_FRACTION {
        return Err(GenerationError::InversionFailures { fraction });
    }

    let name = out_dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| GenerationError::InvalidScene("output path has no file name".into()))?;
    let parent = out_dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;

    let manifest = SequenceManifest::for_scene(scene);
    let result = (|| -> Result<Vec<TierSummary>, GenerationError> {
        manifest.write(&staging.join("meta.json"))?;
        let mut summaries = Vec::new();
        for tier in Tier::ALL.iter().rev().copied() {
            let (w, h) = tier.dims(scene.width, scene.height);
            if w == 0 || h == 0 {
                return Err(GenerationError::InvalidScene(format!(
                    "canvas {}x{} too small for tier {tier}",
                    scene.width, scene.height
                )));
            }
            let dir_name = tier_dir_name(w, h);
            let dir = staging.join(&dir_name);
            fs::create_dir_all(&dir)?;
            let mut summary = TierSummary {
                tier,
                width: w,
                height: h,
                directory: out_dir.join(&dir_name),
                occlusion_counts: Vec::new(),
                invalid_pixels: Vec::new(),
            };
            for (i, frame) in full.iter().enumerate() {
                let a = tier_annotations(scene, frame, tier);
                write_png(&dir.join(format!("frame_{i}.png")), &a.image)?;
                if i == 0 || i == TIMESTEP_COUNT - 1 {
                    continue;
                }
                fs::write(
                    dir.join(format!("flow_t{i}_to_t0.flo")),
                    write_flow_file(&a.flow_to_first),
                )?;
                fs::write(
                    dir.join(format!("flow_t{i}_to_t8.flo")),
                    write_flow_file(&a.flow_to_second),
                )?;
                let occ = a.visibility.to_occlusion();
                fs::write(dir.join(format!("occ_t{i}.png")), occ.encode_png()?)?;
                fs::write(
                    dir.join(format!("vis_t{i}.png")),
                    a.visibility.encode_png()?,
                )?;
                fs::write(
                    dir.join(format!("phot_t{i}.png")),
                    a.photometric.encode_png()?,
                )?;
                summary.occlusion_counts.push(occ.class_counts());
                summary
                    .invalid_pixels
                    .push((w * h) as u64 - occ.valid_count());
            }
            summaries.push(summary);
        }
        Ok(summaries)
    })();
    let tiers = match result {
        Ok(t) => t,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    fs::rename(&staging, out_dir)?;
    Ok(SequenceBundle {
        directory: out_dir.to_path_buf(),
        manifest,
        tiers,
        inversion_failure_fraction: fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub sequences: usize,
    pub scene: SceneConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sequences: 666,
            scene: SceneConfig::default(),
        }
    }
}

impl DatasetConfig {
    /// 512×256 canvas, ten sequences.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            sequences: 10,
            scene: SceneConfig::for_canvas(512, 256),
        }
    }
}

/// Generates `config.sequences` sequences under `root` in parallel. A
/// sequence whose scene or render is rejected is resampled with the next
/// attempt index.
pub fn generate_dataset(
    config: &DatasetConfig,
    root: &Path,
) -> Result<Vec<SequenceBundle>, GenerationError> {
    fs::create_dir_all(root)?;
    let text = serde_json::to_string_pretty(config)?;
    fs::write(root.join("dataset.json"), text + "\n")?;
    (0..config.sequences)
        .into_par_iter()
        .map(|id| {
            let dir = root.join(sequence_dir_name(id));
            let mut last = None;
            for attempt in 0..MAX_ATTEMPTS {
                let seed = sequence_seed(config.seed, id as u64, attempt);
                let outcome =
                    sample_scene(&config.scene, seed).and_then(|s| generate_sequence(&s, &dir));
                match outcome {
                    Ok(bundle) => return Ok(bundle),
                    Err(e @ GenerationError::InversionFailures { .. })
                    | Err(e @ GenerationError::RejectionBudget { .. }) => {
                        log::warn!("sequence {id} attempt {attempt} rejected: {e}");
                        last = Some(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

/// Copies the participant-facing part of a dataset: the two input frames of
/// every tier and a manifest without seed or transforms.
pub fn export_public(dataset: &Path, out: &Path) -> Result<usize, GenerationError> {
    fs::create_dir_all(out)?;
    let mut entries: Vec<PathBuf> = fs::read_dir(dataset)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seq_"))
        })
        .collect();
    entries.sort();
    let mut exported = 0;
    for seq in entries {
        let meta = seq.join("meta.json");
        if !meta.is_file() {
            log::warn!("skipping {}: no meta.json", seq.display());
            continue;
        }
        let manifest = SequenceManifest::read(&meta)?;
        let target = out.join(seq.file_name().expect("named entry"));
        fs::create_dir_all(&target)?;
        manifest.stripped().write(&target.join("meta.json"))?;
        for tier in &manifest.tiers {
            let (w, h) = tier.dims(manifest.width, manifest.height);
            let name = tier_dir_name(w, h);
            fs::create_dir_all(target.join(&name))?;
            for i in [0, TIMESTEP_COUNT - 1] {
                let file = format!("frame_{i}.png");
                fs::copy(seq.join(&name).join(&file), target.join(&name).join(&file))?;
            }
        }
        exported += 1;
    }
    Ok(exported)
}
