//! Evaluation: Jaccard similarity over binary masks, prediction
//! binarization, and per-image report aggregation.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::Mask;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Jaccard Similarity Coefficient |A n B| / |A u B| over white pixels.
/// Two empty masks compare as 1.0.
pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64> {
    if (a.w, a.h) != (b.w, b.h) {
        return Err(Error::Shape(format!(
            "mask size mismatch: {}x{} vs {}x{}",
            a.w, a.h, b.w, b.h
        )));
    }
    if a.data.iter().chain(b.data.iter()).any(|&v| v > 1) {
        return Err(Error::Contract(
            "jaccard requires binary masks (binarize first)".into(),
        ));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x & y) as u64;
        union += (x | y) as u64;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Threshold a `[1,H,W]` (or `[H,W]`) prediction; pixels >= threshold map to 1.
pub fn binarize<T: Scalar>(pred: &Tensor<T>, threshold: f64) -> Result<Mask> {
    let (h, w) = match pred.shape() {
        [1, h, w] => (*h, *w),
        [h, w] => (*h, *w),
        other => {
            return Err(Error::Shape(format!(
                "binarize expects [1,H,W] or [H,W], got {other:?}"
            )))
        }
    };
    let thr = T::from_f64(threshold);
    let data = pred
        .data()
        .iter()
        .map(|&v| if v >= thr { 1u8 } else { 0u8 })
        .collect();
    Mask::from_data(w, h, data)
}

/// Per-image JCS list plus summary statistics; timing is supplied by the
/// caller (model compute only, excluding file I/O).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<f64>,
    pub mean_jcs: f64,
    pub std_jcs: f64,
    pub mean_seconds: f64,
    pub image_count: usize,
}

impl EvalReport {
    pub fn from_scores(per_image: Vec<f64>, mean_seconds: f64) -> Self {
        let n = per_image.len();
        let mean = if n == 0 {
            0.0
        } else {
            per_image.iter().sum::<f64>() / n as f64
        };
        let var = if n == 0 {
            0.0
        } else {
            per_image.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        };
        EvalReport {
            per_image,
            mean_jcs: mean,
            std_jcs: libm::sqrt(var),
            mean_seconds,
            image_count: n,
        }
    }
}
