//! Benchmarking toolkit for video frame interpolation on synthetic data with
//! strictly linear motion.
//!
//! The crate is split into four layers:
//!
//! * [`imaging`]: raster, flow and mask containers plus their on-disk codecs
//!   and anti-aliased resampling.
//! * [`synthgen`]: layered sprite scenes whose per-pixel trajectories are
//!   exactly linear in time, together with ground-truth flow, occlusion and
//!   photometric annotations.
//! * [`metrics`]: pooled pixel-wise error metrics (PSNR, PSNR*, PSNR*σ),
//!   attribute binning, nonlinearity masking and rank statistics.
//! * [`harness`]: dataset loading, submission validation, evaluation,
//!   baselines, report rendering and runtime measurement.

pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod synthgen;
mod tier;

pub use tier::Tier;

/// Version string embedded in reports and dataset manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
