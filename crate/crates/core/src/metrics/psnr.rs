use super::{ErrorAccumulator, MetricsError, Result};

/// Smallest error fed to the logarithm; caps every score at 100 dB.
pub const MSE_FLOOR: f64 = 1e-10;

fn decibels(err: f64) -> f64 {
    -10.0 * err.max(MSE_FLOOR).log10()
}

/// Per-frame mean squared errors, one entry per evaluated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameErrors {
    pub mse: Vec<f64>,
}

impl FrameErrors {
    pub fn new(mse: Vec<f64>) -> Result<Self> {
        if mse.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(MetricsError::Argument(
                "per-frame MSE values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { mse })
    }

    pub fn len(&self) -> usize {
        self.mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse.is_empty()
    }
}

/// Classic PSNR: the mean of per-frame PSNR values.
pub fn psnr_mean_frames(frames: &FrameErrors) -> Result<f64> {
    if frames.is_empty() {
        return Err(MetricsError::Argument("no frames to average".into()));
    }
    let total: f64 = frames.mse.iter().map(|&m| decibels(m)).sum();
    Ok(total / frames.len() as f64)
}

/// PSNR*: the logarithm is taken after pooling errors over every pixel.
pub fn psnr_star(acc: &ErrorAccumulator) -> Result<f64> {
    match acc.mean() {
        Some(mean) => Ok(decibels(mean)),
        None => Err(MetricsError::Undefined(
            "PSNR* needs at least one pixel".into(),
        )),
    }
}

/// PSNR*σ: like PSNR* but on the sample standard deviation of the
/// per-pixel squared errors (`M - 1` denominator).
pub fn psnr_star_sigma(acc: &ErrorAccumulator) -> Result<f64> {
    if acc.count() < 2 {
        return Err(MetricsError::Undefined(
            "PSNR*σ needs at least two pixels".into(),
        ));
    }
    let m = acc.count() as f64;
    let (sum, sum_sq) = (acc.sum_se(), acc.sum_se_sq());
    let centered = sum_sq - sum * sum / m;
    // Anything below the rounding noise of the two sums is a zero spread.
    let noise = 64.0 * f64::EPSILON * sum_sq;
    let variance = if centered <= noise {
        0.0
    } else {
        centered / (m - 1.0)
    };
    Ok(decibels(variance.sqrt()))
}
