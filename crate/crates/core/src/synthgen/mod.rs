//! Synthetic sequence generator: layered sprites under linear-in-time
//! projective motion, rendered with exact ground-truth annotations.

mod render;
mod rng;
mod scene;
mod sequence;
mod sprite;
mod transform;

use thiserror::Error;

use crate::imaging::ImagingError;

pub use render::{
    annotate, gt_flow, occlusion_mask, owner_at, photometric_attribute, render_frame, Annotations,
};
pub use rng::{sequence_seed, stream, Purpose};
pub use scene::{
    sample_scene, timestep, Bounds, Layer, PhotometricRanges, SceneConfig, SceneSpec,
    INVERSION_TOLERANCE, MAX_NEWTON_ITERATIONS, OWNERSHIP_ALPHA, REJECTION_BUDGET, TIMESTEP_COUNT,
};
pub use sequence::{
    export_public, generate_dataset, generate_sequence, scene_from_manifest, sequence_dir_name,
    tier_annotations, tier_dir_name, DatasetConfig, LayerManifest, SequenceBundle,
    SequenceManifest, TierSummary, MANIFEST_VERSION, MAX_INVERSION_FAILURE_FRACTION,
};
pub use sprite::{procedural_background, procedural_sprite, Sprite, SpriteSource, StarShape};
pub use transform::{GeometricTransform, PhotometricTransform, Point};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("rejection budget exhausted after {tries} tries: {constraint}")]
    RejectionBudget { constraint: String, tries: usize },
    #[error("point-map inversion failed for {fraction:.4}% of pixels", fraction = .fraction * 100.0)]
    InversionFailures { fraction: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}
