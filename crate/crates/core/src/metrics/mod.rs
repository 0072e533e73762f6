//! Pixel-wise error metrics and per-attribute breakdowns.
//!
//! Every metric is computed from pooled per-pixel squared errors. `SE_k` is
//! the channel mean of squared differences between dequantized prediction
//! and ground truth, so it lies in `[0, 1]`. Zero errors are clamped to
//! `1e-10` before the logarithm, which caps scores at 100 dB.

mod accumulator;
mod binning;
mod consistency;
mod nonlinearity;
mod psnr;
mod rank;

pub use accumulator::{accumulate, se_map, ErrorAccumulator};
pub use binning::{
    bin_by_attribute, default_edges, split_by_occlusion, AttributeKind, AttributeSource, Bin,
    BinnedReport,
};
pub use consistency::{consistency_occlusion, flow_consistency, ConsistencyThreshold};
pub use nonlinearity::{nonlinearity_map, top_fraction_mask};
pub use psnr::{psnr_mean_frames, psnr_star, psnr_star_sigma, FrameErrors, MSE_FLOOR};
pub use rank::{competition_ranks, mid_ranks, spearman_rho, RankTable};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
