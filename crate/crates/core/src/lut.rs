//! Dense 3D LUTs, interpolation kernels, basis fusion and image application.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;

/// Interpolation kernel used when sampling a LUT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpKind {
    #[default]
    Trilinear,
    Tetrahedral,
}

impl std::str::FromStr for InterpKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trilinear" => Ok(InterpKind::Trilinear),
            "tetrahedral" => Ok(InterpKind::Tetrahedral),
            other => Err(format!("unknown interpolation kind `{other}`")),
        }
    }
}

/// A `G×G×G` lattice of RGB triples, red index fastest in storage.
///
/// The same type carries residual tensors, whose entries are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut3D {
    size: usize,
    entries: Vec<RgbColor>,
}

impl Lut3D {
    pub fn new(size: usize, entries: Vec<RgbColor>) -> Result<Self> {
        if size < 2 {
            return Err(LutError::GridTooSmall(size));
        }
        if entries.len() != size * size * size {
            return Err(LutError::ShapeMismatch(format!(
                "grid {size} needs {} entries, got {}",
                size * size * size,
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(LutError::NonFinite("LUT entries"));
        }
        Ok(Self { size, entries })
    }

    pub fn constant(size: usize, value: RgbColor) -> Result<Self> {
        Self::new(size, vec![value; size * size * size])
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::constant(size, RgbColor::ZERO)
    }

    /// Builds a LUT by evaluating `f(i, j, k)` at every lattice point.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize, usize) -> RgbColor) -> Result<Self> {
        if size < 2 {
            return Err(LutError::GridTooSmall(size));
        }
        let mut entries = Vec::with_capacity(size * size * size);
        for k in 0..size {
            for j in 0..size {
                for i in 0..size {
                    entries.push(f(i, j, k));
                }
            }
        }
        Self::new(size, entries)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.size * (j + self.size * k)
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize, k: usize) -> RgbColor {
        self.entries[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: RgbColor) {
        let idx = self.index(i, j, k);
        self.entries[idx] = v;
    }

    pub fn entries(&self) -> &[RgbColor] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [RgbColor] {
        &mut self.entries
    }

    pub fn map(&self, f: impl Fn(RgbColor) -> RgbColor) -> Lut3D {
        Lut3D {
            size: self.size,
            entries: self.entries.iter().map(|&e| f(e)).collect(),
        }
    }

    /// Entrywise `self + other`.
    pub fn add(&self, other: &Lut3D) -> Result<Lut3D> {
        self.ensure_same_size(other)?;
        Ok(Lut3D {
            size: self.size,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &Lut3D) -> Result<Lut3D> {
        self.ensure_same_size(other)?;
        Ok(Lut3D {
            size: self.size,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn ensure_same_size(&self, other: &Lut3D) -> Result<()> {
        if self.size != other.size {
            return Err(LutError::GridMismatch {
                expected: self.size,
                actual: other.size,
            });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Lut3D) -> Result<f64> {
        self.ensure_same_size(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.max_abs_diff(*b))
            .fold(0.0, f64::max))
    }

    pub fn sample(&self, c: RgbColor, kind: InterpKind) -> RgbColor {
        match kind {
            InterpKind::Trilinear => sample_trilinear(self, c),
            InterpKind::Tetrahedral => sample_tetrahedral(self, c),
        }
    }
}

/// `entry(i, j, k) = (i, j, k) / (G − 1)`.
pub fn identity_lut(size: usize) -> Result<Lut3D> {
    if size < 2 {
        return Err(LutError::GridTooSmall(size));
    }
    let step = (size - 1) as f64;
    Lut3D::from_fn(size, |i, j, k| {
        RgbColor::new(i as f64 / step, j as f64 / step, k as f64 / step)
    })
}

/// Lower lattice index and fractional offset along one axis. `v = 1` lands
/// in the last cell with fraction 1.
#[inline]
fn locate(v: f64, size: usize) -> (usize, f64) {
    let x = v.clamp(0.0, 1.0) * (size - 1) as f64;
    let i = (x.floor() as usize).min(size - 2);
    (i, x - i as f64)
}

/// The eight lattice entries touched by a trilinear lookup and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrilinearStencil {
    pub indices: [usize; 8],
    pub weights: [f64; 8],
}

impl TrilinearStencil {
    /// Corner `n` has offsets `(n & 1, (n >> 1) & 1, (n >> 2) & 1)` along (r, g, b).
    pub fn new(size: usize, c: RgbColor) -> Self {
        let (i, fr) = locate(c.r, size);
        let (j, fg) = locate(c.g, size);
        let (k, fb) = locate(c.b, size);
        let mut indices = [0usize; 8];
        let mut weights = [0.0; 8];
        for n in 0..8 {
            let (di, dj, dk) = (n & 1, (n >> 1) & 1, (n >> 2) & 1);
            indices[n] = (i + di) + size * ((j + dj) + size * (k + dk));
            let wr = if di == 1 { fr } else { 1.0 - fr };
            let wg = if dj == 1 { fg } else { 1.0 - fg };
            let wb = if dk == 1 { fb } else { 1.0 - fb };
            weights[n] = wr * wg * wb;
        }
        debug_assert!(weights.iter().all(|&w| w >= 0.0));
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        Self { indices, weights }
    }
}

/// Trilinear interpolation over the eight vertices of the enclosing cell.
pub fn sample_trilinear(lut: &Lut3D, c: RgbColor) -> RgbColor {
    let st = TrilinearStencil::new(lut.size, c);
    let mut out = RgbColor::ZERO;
    for n in 0..8 {
        out += lut.entries[st.indices[n]] * st.weights[n];
    }
    out
}

/// Tetrahedral interpolation: the cell is split into six tetrahedra along
/// the ordering of the fractional coordinates. Ties resolve with priority
/// r > g > b.
pub fn sample_tetrahedral(lut: &Lut3D, c: RgbColor) -> RgbColor {
    let size = lut.size;
    let (i, fr) = locate(c.r, size);
    let (j, fg) = locate(c.g, size);
    let (k, fb) = locate(c.b, size);
    let at = |di: usize, dj: usize, dk: usize| lut.entry(i + di, j + dj, k + dk);

    let c000 = at(0, 0, 0);
    let c111 = at(1, 1, 1);
    // (first vertex, second vertex, their weights) for the path 000 -> a -> b -> 111.
    let (a, b, w0, wa, wb, w1) = if fr >= fg {
        if fg >= fb {
            (at(1, 0, 0), at(1, 1, 0), 1.0 - fr, fr - fg, fg - fb, fb)
        } else if fr >= fb {
            (at(1, 0, 0), at(1, 0, 1), 1.0 - fr, fr - fb, fb - fg, fg)
        } else {
            (at(0, 0, 1), at(1, 0, 1), 1.0 - fb, fb - fr, fr - fg, fg)
        }
    } else if fb >= fg {
        (at(0, 0, 1), at(0, 1, 1), 1.0 - fb, fb - fg, fg - fr, fr)
    } else if fr >= fb {
        (at(0, 1, 0), at(1, 1, 0), 1.0 - fg, fg - fr, fr - fb, fb)
    } else {
        (at(0, 1, 0), at(0, 1, 1), 1.0 - fg, fg - fb, fb - fr, fr)
    };
    c000 * w0 + a * wa + b * wb + c111 * w1
}

/// Applies the LUT to every pixel. Inputs are clamped to `[0, 1]` before
/// lookup; outputs are clamped only when `clamp_output` is set.
pub fn apply_to_image(lut: &Lut3D, img: &ImageBuffer, kind: InterpKind, clamp_output: bool) -> ImageBuffer {
    let map = |p: &RgbColor| {
        let out = lut.sample(*p, kind);
        if clamp_output {
            out.clamp01()
        } else {
            out
        }
    };
    let pixels: Vec<RgbColor> = if img.len() >= 4096 {
        img.pixels().par_iter().with_min_len(1024).map(map).collect()
    } else {
        img.pixels().iter().map(map).collect()
    };
    ImageBuffer::from_raw(img.width(), img.height(), pixels)
}

/// Entrywise weighted sum `Σ α_k L_k`. Weights are unconstrained reals.
pub fn fuse(bases: &[Lut3D], alphas: &[f64]) -> Result<Lut3D> {
    let first = bases.first().ok_or(LutError::EmptyBasis)?;
    if bases.len() != alphas.len() {
        return Err(LutError::ShapeMismatch(format!(
            "{} bases but {} fusion weights",
            bases.len(),
            alphas.len()
        )));
    }
    for b in &bases[1..] {
        first.ensure_same_size(b)?;
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(LutError::NonFinite("fusion weights"));
    }
    let mut entries = vec![RgbColor::ZERO; first.len()];
    for (base, &alpha) in bases.iter().zip(alphas) {
        for (acc, &e) in entries.iter_mut().zip(&base.entries) {
            *acc += e * alpha;
        }
    }
    Lut3D::new(first.size, entries)
}
