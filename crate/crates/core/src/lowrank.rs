//! CP low-rank residuals and their composition with basis LUTs.
//!
//! A residual is `ΔL[i,j,k][ch] = Σ_r s_r · c_r[ch] · u_r[i] · v_r[j] · w_r[k]`,
//! where `s` are per-component scales (all ones unless a viewer is editing).
//! The final LUT is `L* = base + ΔL` with `base` either the identity (`K = 0`)
//! or the fusion `Σ_k α_k L_k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::lut::{fuse, identity_lut, Lut3D};

/// One rank-1 term: three axis factors and a color coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComponent {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub c: [f64; 3],
}

impl RankComponent {
    pub fn zeros(size: usize) -> Self {
        Self {
            u: vec![0.0; size],
            v: vec![0.0; size],
            w: vec![0.0; size],
            c: [0.0; 3],
        }
    }

    fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(&self.v)
            .chain(&self.w)
            .chain(&self.c)
            .all(|x| x.is_finite())
    }
}

/// Rank-`R` CP factor set over a grid of size `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpFactors {
    size: usize,
    components: Vec<RankComponent>,
}

impl CpFactors {
    pub fn new(size: usize, components: Vec<RankComponent>) -> Result<Self> {
        if size < 2 {
            return Err(LutError::GridTooSmall(size));
        }
        for (r, comp) in components.iter().enumerate() {
            if comp.u.len() != size || comp.v.len() != size || comp.w.len() != size {
                return Err(LutError::ShapeMismatch(format!(
                    "component {r}: factor lengths ({}, {}, {}) do not match grid {size}",
                    comp.u.len(),
                    comp.v.len(),
                    comp.w.len()
                )));
            }
            if !comp.is_finite() {
                return Err(LutError::NonFinite("CP factors"));
            }
        }
        Ok(Self { size, components })
    }

    pub fn zeros(size: usize, rank: usize) -> Result<Self> {
        Self::new(size, vec![RankComponent::zeros(size); rank])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[RankComponent] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [RankComponent] {
        &mut self.components
    }

    pub fn component(&self, r: usize) -> Result<&RankComponent> {
        self.components.get(r).ok_or(LutError::ComponentIndex {
            index: r,
            rank: self.rank(),
        })
    }
}

/// Per-component multipliers applied to the color coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScales(Vec<f64>);

impl ComponentScales {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|s| !s.is_finite()) {
            return Err(LutError::NonFinite("component scales"));
        }
        Ok(Self(scales))
    }

    pub fn ones(rank: usize) -> Self {
        Self(vec![1.0; rank])
    }

    pub fn zeros(rank: usize) -> Self {
        Self(vec![0.0; rank])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Basis LUTs, fusion weights and a CP residual over a shared grid.
///
/// With no bases the implicit base is the identity LUT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorLutModel {
    pub grid_size: usize,
    pub bases: Vec<Lut3D>,
    pub alphas: Vec<f64>,
    pub factors: CpFactors,
}

impl LorLutModel {
    pub fn new(grid_size: usize, bases: Vec<Lut3D>, alphas: Vec<f64>, factors: CpFactors) -> Result<Self> {
        let m = Self {
            grid_size,
            bases,
            alphas,
            factors,
        };
        m.validate()?;
        Ok(m)
    }

    /// Identity base with a zero-rank residual.
    pub fn identity(grid_size: usize) -> Result<Self> {
        Self::new(grid_size, Vec::new(), Vec::new(), CpFactors::zeros(grid_size, 0)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(LutError::GridTooSmall(self.grid_size));
        }
        if self.bases.len() != self.alphas.len() {
            return Err(LutError::ShapeMismatch(format!(
                "{} bases but {} fusion weights",
                self.bases.len(),
                self.alphas.len()
            )));
        }
        for b in &self.bases {
            if b.size() != self.grid_size {
                return Err(LutError::GridMismatch {
                    expected: self.grid_size,
                    actual: b.size(),
                });
            }
        }
        if self.factors.size() != self.grid_size {
            return Err(LutError::GridMismatch {
                expected: self.grid_size,
                actual: self.factors.size(),
            });
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(LutError::NonFinite("fusion weights"));
        }
        Ok(())
    }

    pub fn basis_count(&self) -> usize {
        self.bases.len()
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    /// The base LUT before the residual is added.
    pub fn base_lut(&self) -> Result<Lut3D> {
        if self.bases.is_empty() {
            identity_lut(self.grid_size)
        } else {
            fuse(&self.bases, &self.alphas)
        }
    }
}

/// Materializes the scaled residual tensor on the lattice.
pub fn reconstruct_residual(f: &CpFactors, s: &ComponentScales) -> Result<Lut3D> {
    if s.len() != f.rank() {
        return Err(LutError::ScaleLength {
            expected: f.rank(),
            actual: s.len(),
        });
    }
    let g = f.size;
    let mut entries = vec![RgbColor::ZERO; g * g * g];
    // Slices along the blue axis are independent; each entry sums r in order.
    entries.par_chunks_mut(g * g).enumerate().for_each(|(k, slice)| {
        for (comp, &scale) in f.components.iter().zip(s.as_slice()) {
            let coef = RgbColor::from_array(comp.c) * scale;
            let wk = comp.w[k];
            for j in 0..g {
                let vw = comp.v[j] * wk;
                let row = &mut slice[j * g..(j + 1) * g];
                for (i, e) in row.iter_mut().enumerate() {
                    *e += coef * (comp.u[i] * vw);
                }
            }
        }
    });
    Lut3D::new(g, entries)
}

/// `L* = base + ΔL(s)`.
pub fn compose_lut(m: &LorLutModel, s: &ComponentScales) -> Result<Lut3D> {
    m.validate()?;
    let residual = reconstruct_residual(&m.factors, s)?;
    m.base_lut()?.add(&residual)
}

/// Parameters of a rank-`R` residual: `3GR + 3R`.
pub fn residual_param_count(grid: u64, rank: u64) -> u64 {
    3 * grid * rank + 3 * rank
}

/// Parameters of one dense LUT: `3G³`.
pub fn dense_param_count(grid: u64) -> u64 {
    3 * grid * grid * grid
}

/// Fixed convolutional encoder size shared by both predictors.
pub const ENCODER_PARAMS: u64 = 5088;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub weight_predictor: u64,
    pub residual_predictor: u64,
    pub basis_luts: u64,
    pub total: u64,
}

/// Learnable-parameter accounting of the full predictor-based model:
/// weight predictor `5088 + 33K`, residual predictor `5088 + 99R(G+1)`,
/// basis LUTs `3KG³`.
pub fn total_param_count(grid: u64, bases: u64, rank: u64) -> ParamBreakdown {
    let weight_predictor = ENCODER_PARAMS + 33 * bases;
    let residual_predictor = ENCODER_PARAMS + 99 * rank * (grid + 1);
    let basis_luts = bases * dense_param_count(grid);
    ParamBreakdown {
        weight_predictor,
        residual_predictor,
        basis_luts,
        total: weight_predictor + residual_predictor + basis_luts,
    }
}

/// Plot data for one rank-1 component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurves {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub c: [f64; 3],
    /// Frobenius norm of the rank-1 term, `‖c‖·‖u‖·‖v‖·‖w‖`. A display
    /// quantity only; it is not used by fitting.
    pub magnitude: f64,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Curves and coefficient of component `r` (zero-based).
pub fn component_curves(f: &CpFactors, r: usize) -> Result<ComponentCurves> {
    let comp = f.component(r)?;
    Ok(ComponentCurves {
        u: comp.u.clone(),
        v: comp.v.clone(),
        w: comp.w.clone(),
        c: comp.c,
        magnitude: norm(&comp.c) * norm(&comp.u) * norm(&comp.v) * norm(&comp.w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_red(size: usize) -> CpFactors {
        CpFactors::new(
            size,
            vec![RankComponent {
                u: vec![1.0; size],
                v: vec![1.0; size],
                w: vec![1.0; size],
                c: [0.1, 0.0, 0.0],
            }],
        )
        .unwrap()
    }

    #[test]
    fn zero_rank_residual_is_zero() {
        let f = CpFactors::zeros(4, 0).unwrap();
        let r = reconstruct_residual(&f, &ComponentScales::ones(0)).unwrap();
        assert!(r.entries().iter().all(|&e| e == RgbColor::ZERO));
    }

    #[test]
    fn constant_red_residual() {
        let r = reconstruct_residual(&constant_red(5), &ComponentScales::ones(1)).unwrap();
        assert!(r.entries().iter().all(|&e| e == RgbColor::new(0.1, 0.0, 0.0)));
    }

    #[test]
    fn scale_length_mismatch() {
        let err = reconstruct_residual(&constant_red(3), &ComponentScales::ones(2)).unwrap_err();
        assert_eq!(err, LutError::ScaleLength { expected: 1, actual: 2 });
    }

    #[test]
    fn compose_identity_cases() {
        let id = identity_lut(6).unwrap();
        let m = LorLutModel::identity(6).unwrap();
        assert_eq!(compose_lut(&m, &ComponentScales::ones(0)).unwrap(), id);

        let m = LorLutModel::new(6, vec![], vec![], constant_red(6)).unwrap();
        assert_eq!(compose_lut(&m, &ComponentScales::zeros(1)).unwrap(), id);

        let m = LorLutModel::new(6, vec![id.clone()], vec![1.0], constant_red(6)).unwrap();
        let out = compose_lut(&m, &ComponentScales::ones(1)).unwrap();
        let expected = id.map(|e| e + RgbColor::new(0.1, 0.0, 0.0));
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn param_counts() {
        assert_eq!(residual_param_count(33, 8), 816);
        assert_eq!(dense_param_count(33), 107_811);
        assert_eq!(residual_param_count(33, 0), 0);
        assert_eq!(residual_param_count(2, 1), 9);
        assert_eq!(total_param_count(33, 0, 8).total, 37_104);
        assert_eq!(total_param_count(33, 0, 32).total, 117_888);
        assert_eq!(total_param_count(33, 8, 32).total, 980_640);
        assert_eq!(total_param_count(33, 0, 0).total, 10_176);
    }

    #[test]
    fn curves_of_constant_red() {
        let g = 9;
        let cur = component_curves(&constant_red(g), 0).unwrap();
        assert_eq!(cur.u, vec![1.0; g]);
        assert_eq!(cur.c, [0.1, 0.0, 0.0]);
        assert!((cur.magnitude - 0.1 * (g as f64).powf(1.5)).abs() < 1e-12);
        assert_eq!(
            component_curves(&constant_red(g), 1).unwrap_err(),
            LutError::ComponentIndex { index: 1, rank: 1 }
        );
    }

    #[test]
    fn model_validation() {
        let f = CpFactors::zeros(4, 2).unwrap();
        assert!(LorLutModel::new(5, vec![], vec![], f.clone()).is_err());
        assert!(LorLutModel::new(4, vec![], vec![1.0], f.clone()).is_err());
        let wrong = identity_lut(3).unwrap();
        assert!(LorLutModel::new(4, vec![wrong], vec![1.0], f).is_err());
    }
}
