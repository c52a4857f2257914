//! Explicit 3D LUT engine with low-rank (CP) residual corrections.
//!
//! A final LUT is the fusion of `K` basis LUTs (or the identity when `K = 0`)
//! plus a rank-`R` residual `Σ c_r ⊗ u_r ⊗ v_r ⊗ w_r`. The residual is
//! materialized on the lattice before interpolation, so applying a composed
//! LUT costs exactly as much per pixel as applying a plain one.

pub mod color;
pub mod error;
pub mod image;
pub mod io;
pub mod lowrank;
pub mod lut;
pub mod metrics;
pub mod optim;

pub use color::{delta_e00, srgb_to_lab, LabColor, RgbColor};
pub use error::{LutError, Result};
pub use image::ImageBuffer;
pub use lowrank::{
    component_curves, compose_lut, reconstruct_residual, residual_param_count, total_param_count,
    ComponentCurves, ComponentScales, CpFactors, LorLutModel, ParamBreakdown,
};
pub use lut::{apply_to_image, fuse, identity_lut, sample_tetrahedral, sample_trilinear, InterpKind, Lut3D};
pub use metrics::{mean_delta_e00, psnr, ssim, Psnr};
