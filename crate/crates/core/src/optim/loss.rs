use serde::{Deserialize, Serialize};

use crate::color::{delta_e00, srgb_to_lab, RgbColor};
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;
use crate::lut::Lut3D;
use crate::metrics::mean_delta_e00;

/// Weights of the training objective.
///
/// `perceptual` is the LPIPS weight; it exists to keep the weight vector
/// complete and must stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub perceptual: f64,
    pub delta_e: f64,
    pub smoothness: f64,
    pub residual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::from_array([1.0, 0.0, 0.0, 0.001, 0.001])
    }
}

impl LossWeights {
    pub fn from_array(l: [f64; 5]) -> Self {
        Self {
            reconstruction: l[0],
            perceptual: l[1],
            delta_e: l[2],
            smoothness: l[3],
            residual: l[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [
            self.reconstruction,
            self.perceptual,
            self.delta_e,
            self.smoothness,
            self.residual,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(LutError::InvalidConfig(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if self.perceptual != 0.0 {
            return Err(LutError::InvalidConfig(
                "perceptual (LPIPS) weight must be 0".into(),
            ));
        }
        Ok(())
    }
}

/// Raw (unweighted) loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub delta_e: f64,
    pub smoothness: f64,
    pub residual: f64,
}

impl LossBreakdown {
    pub(crate) fn compose(w: &LossWeights, reconstruction: f64, delta_e: f64, smoothness: f64, residual: f64) -> Self {
        Self {
            total: w.reconstruction * reconstruction
                + w.delta_e * delta_e
                + w.smoothness * smoothness
                + w.residual * residual,
            reconstruction,
            delta_e,
            smoothness,
            residual,
        }
    }
}

/// Squared adjacent-difference smoothness over the three lattice axes,
/// summed over channels.
pub fn tv_loss(lut: &Lut3D) -> f64 {
    let g = lut.size();
    let e = lut.entries();
    let sq = |a: RgbColor, b: RgbColor| {
        let d = b - a;
        d.r * d.r + d.g * d.g + d.b * d.b
    };
    let mut sum = 0.0;
    for k in 0..g {
        for j in 0..g {
            for i in 0..g {
                let here = e[lut.index(i, j, k)];
                if i + 1 < g {
                    sum += sq(here, e[lut.index(i + 1, j, k)]);
                }
                if j + 1 < g {
                    sum += sq(here, e[lut.index(i, j + 1, k)]);
                }
                if k + 1 < g {
                    sum += sq(here, e[lut.index(i, j, k + 1)]);
                }
            }
        }
    }
    sum
}

/// Squared Frobenius norm of a residual tensor.
pub fn l2_residual(residual: &Lut3D) -> f64 {
    residual
        .entries()
        .iter()
        .map(|e| e.r * e.r + e.g * e.g + e.b * e.b)
        .sum()
}

/// Mean absolute error over pixels and channels.
pub fn mean_l1(pred: &ImageBuffer, target: &ImageBuffer) -> Result<f64> {
    pred.ensure_same_dims(target)?;
    if pred.is_empty() {
        return Err(LutError::EmptyImage);
    }
    let sum: f64 = pred
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(p, t)| {
            let d = *p - *t;
            d.r.abs() + d.g.abs() + d.b.abs()
        })
        .sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// Weighted objective on an (unclamped) prediction. The ΔE00 term is only
/// evaluated when its weight is positive.
pub fn loss_total(
    pred: &ImageBuffer,
    target: &ImageBuffer,
    lut: &Lut3D,
    residual: &Lut3D,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    let l1 = mean_l1(pred, target)?;
    let de = if w.delta_e > 0.0 {
        mean_delta_e00(pred, target)?
    } else {
        0.0
    };
    let tv = if w.smoothness > 0.0 { tv_loss(lut) } else { 0.0 };
    let l2 = if w.residual > 0.0 { l2_residual(residual) } else { 0.0 };
    Ok(LossBreakdown::compose(w, l1, de, tv, l2))
}

/// Central-difference gradient of `ΔE00(pred, target)` with respect to the
/// predicted color.
pub(crate) fn delta_e_gradient(pred: RgbColor, target: RgbColor) -> [f64; 3] {
    const H: f64 = 1e-6;
    let t = srgb_to_lab(target);
    let mut g = [0.0; 3];
    for (ch, out) in g.iter_mut().enumerate() {
        let mut hi = pred;
        let mut lo = pred;
        hi[ch] += H;
        lo[ch] -= H;
        *out = (delta_e00(srgb_to_lab(hi), t) - delta_e00(srgb_to_lab(lo), t)) / (2.0 * H);
    }
    g
}
