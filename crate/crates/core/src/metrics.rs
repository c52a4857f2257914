//! Image quality metrics: PSNR, SSIM and mean CIEDE2000.
//!
//! Reductions run per row (optionally in parallel) and the row partials are
//! then summed in row order, so results do not depend on the thread count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{delta_e00, srgb_to_lab};
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// PSNR in decibels; identical images report [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    /// Numeric value with `+inf` for the infinite case.
    pub fn value(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.6}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

fn row_reduce(img: &ImageBuffer, row_fn: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let partials: Vec<f64> = (0..img.height()).into_par_iter().map(row_fn).collect();
    partials.iter().sum()
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.is_empty() {
        return Err(LutError::EmptyImage);
    }
    let w = a.width();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sum = row_reduce(a, |y| {
        let mut s = 0.0;
        for x in 0..w {
            let d = pa[y * w + x] - pb[y * w + x];
            s += d.r * d.r + d.g * d.g + d.b * d.b;
        }
        s
    });
    Ok(sum / (3 * a.len()) as f64)
}

/// PSNR with peak 1.0.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Psnr> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Finite(10.0 * (1.0 / m).log10()))
    }
}

/// Mean CIEDE2000 over all pixels (colors are clamped to `[0, 1]` before conversion).
pub fn mean_delta_e00(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.is_empty() {
        return Err(LutError::EmptyImage);
    }
    let w = a.width();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sum = row_reduce(a, |y| {
        (0..w)
            .map(|x| delta_e00(srgb_to_lab(pa[y * w + x]), srgb_to_lab(pb[y * w + x])))
            .sum::<f64>()
    });
    Ok(sum / a.len() as f64)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of a single-channel plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * plane[y * w + x + t];
            }
            horiz[y * ow + x] = s;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * horiz[(y + t) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_kernel();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / n as f64
}

/// Mean SSIM over valid 11×11 Gaussian windows (σ = 1.5), averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(LutError::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let channels: Vec<f64> = (0..3)
        .into_par_iter()
        .map(|ch| {
            let pa: Vec<f64> = a.pixels().iter().map(|p| p[ch]).collect();
            let pb: Vec<f64> = b.pixels().iter().map(|p| p[ch]).collect();
            ssim_channel(&pa, &pb, w, h)
        })
        .collect();
    Ok(channels.iter().sum::<f64>() / 3.0)
}
