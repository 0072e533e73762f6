//! Image, flow and mask containers with bit-exact codecs.
//!
//! Frames have two representations: *coded* 8-bit triples as stored on disk
//! and *working* unit-interval reals used for all filtering and metrics.
//! Conversion is `v / 255` one way and `round(v * 255)` clamped the other;
//! quantization happens exactly once, at final encode.

mod codec;
mod flow;
mod mask;
mod raster;
mod resize;

pub use codec::{
    png_info, read_gray16, read_gray8, read_image, write_gray16, write_gray8, write_image, PngInfo,
};
pub use flow::{read_flow_file, write_flow_file, FlowField, FLOW_MAGIC};
pub use mask::{AttributeMap, OcclusionMask, Visibility, INVALID_CLASS};
pub use raster::{dequantize, quantize, CodedImage, Raster, WorkingImage};
pub use resize::{resize_antialiased, Kernel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: u64, message: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("flow format error: {0}")]
    FlowFormat(String),
    #[error("flow stream truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("encode error: {0}")]
    Encode(String),
}

pub type Result<T, E = ImagingError> = std::result::Result<T, E>;
