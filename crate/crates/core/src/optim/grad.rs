//! Analytic gradients of the objective with respect to fusion weights and
//! CP factors.
//!
//! The chain runs image → lattice → factors: per-pixel upstream gradients are
//! scattered onto the eight trilinear vertices, the smoothness and residual
//! penalties add their lattice gradients, and the lattice gradient is
//! contracted against the other factors of each rank-1 term.

use serde::{Deserialize, Serialize};

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;
use crate::lowrank::{reconstruct_residual, ComponentScales, CpFactors, LorLutModel, RankComponent};
use crate::lut::{Lut3D, TrilinearStencil};
use crate::optim::loss::{delta_e_gradient, l2_residual, mean_l1, tv_loss, LossBreakdown, LossWeights};
use crate::metrics::mean_delta_e00;

/// Gradient with the same layout as the trainable parameters of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub alphas: Vec<f64>,
    pub components: Vec<RankComponent>,
}

impl Gradients {
    pub fn zeros_like(model: &LorLutModel) -> Self {
        Self {
            alphas: vec![0.0; model.alphas.len()],
            components: vec![RankComponent::zeros(model.grid_size); model.rank()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.alphas.clone();
        for c in &self.components {
            out.extend_from_slice(&c.u);
            out.extend_from_slice(&c.v);
            out.extend_from_slice(&c.w);
            out.extend_from_slice(&c.c);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|g| g.is_finite())
    }
}

/// Number of trainable scalars: `K + R(3G + 3)`.
pub fn param_count(model: &LorLutModel) -> usize {
    model.alphas.len() + model.rank() * (3 * model.grid_size + 3)
}

/// Trainable parameters of a model as one vector (α first, then `u, v, w, c`
/// per component).
pub fn flatten_params(model: &LorLutModel) -> Vec<f64> {
    Gradients {
        alphas: model.alphas.clone(),
        components: model.factors.components().to_vec(),
    }
    .flatten()
}

/// Writes a flat parameter vector back into a model with matching shape.
pub fn unflatten_params(model: &mut LorLutModel, params: &[f64]) -> Result<()> {
    if params.len() != param_count(model) {
        return Err(LutError::ShapeMismatch(format!(
            "expected {} parameters, got {}",
            param_count(model),
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(LutError::NonFinite("model parameters"));
    }
    let g = model.grid_size;
    let k = model.alphas.len();
    model.alphas.copy_from_slice(&params[..k]);
    let mut at = k;
    for comp in model.factors.components_mut() {
        comp.u.copy_from_slice(&params[at..at + g]);
        comp.v.copy_from_slice(&params[at + g..at + 2 * g]);
        comp.w.copy_from_slice(&params[at + 2 * g..at + 3 * g]);
        comp.c.copy_from_slice(&params[at + 3 * g..at + 3 * g + 3]);
        at += 3 * g + 3;
    }
    Ok(())
}

/// Forward pass: prediction, composed LUT and residual, plus the loss.
pub struct Forward {
    pub pred: ImageBuffer,
    pub lut: Lut3D,
    pub residual: Lut3D,
    pub stencils: Vec<TrilinearStencil>,
    pub loss: LossBreakdown,
}

pub fn forward(input: &ImageBuffer, target: &ImageBuffer, model: &LorLutModel, w: &LossWeights) -> Result<Forward> {
    w.validate()?;
    input.ensure_same_dims(target)?;
    model.validate()?;
    let residual = reconstruct_residual(&model.factors, &ComponentScales::ones(model.rank()))?;
    let lut = model.base_lut()?.add(&residual)?;
    let g = lut.size();
    let stencils: Vec<TrilinearStencil> = input
        .pixels()
        .iter()
        .map(|&p| TrilinearStencil::new(g, p))
        .collect();
    let entries = lut.entries();
    let pred_pixels: Vec<RgbColor> = stencils
        .iter()
        .map(|st| {
            let mut out = RgbColor::ZERO;
            for n in 0..8 {
                out += entries[st.indices[n]] * st.weights[n];
            }
            out
        })
        .collect();
    let pred = ImageBuffer::new(input.width(), input.height(), pred_pixels)?;

    let l1 = mean_l1(&pred, target)?;
    let de = if w.delta_e > 0.0 { mean_delta_e00(&pred, target)? } else { 0.0 };
    let tv = if w.smoothness > 0.0 { tv_loss(&lut) } else { 0.0 };
    let l2 = if w.residual > 0.0 { l2_residual(&residual) } else { 0.0 };
    let loss = LossBreakdown::compose(w, l1, de, tv, l2);
    Ok(Forward {
        pred,
        lut,
        residual,
        stencils,
        loss,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of the loss with respect to the composed LUT entries, plus the
/// residual-specific part (`2 λ5 ΔL`) folded in separately by the caller.
fn lattice_gradient(fwd: &Forward, target: &ImageBuffer, w: &LossWeights) -> Vec<RgbColor> {
    let lut = &fwd.lut;
    let g = lut.size();
    let n_px = fwd.pred.len() as f64;
    let mut grad = vec![RgbColor::ZERO; lut.len()];

    let l1_scale = w.reconstruction / (3.0 * n_px);
    let de_scale = w.delta_e / n_px;
    for ((st, &p), &t) in fwd.stencils.iter().zip(fwd.pred.pixels()).zip(target.pixels()) {
        let mut up = RgbColor::ZERO;
        if w.reconstruction > 0.0 {
            up = RgbColor::new(sign(p.r - t.r), sign(p.g - t.g), sign(p.b - t.b)) * l1_scale;
        }
        if w.delta_e > 0.0 {
            up += RgbColor::from_array(delta_e_gradient(p, t)) * de_scale;
        }
        if up == RgbColor::ZERO {
            continue;
        }
        for n in 0..8 {
            grad[st.indices[n]] += up * st.weights[n];
        }
    }

    if w.smoothness > 0.0 {
        let e = lut.entries();
        let two_l = 2.0 * w.smoothness;
        let strides = [1, g, g * g];
        for k in 0..g {
            for j in 0..g {
                for i in 0..g {
                    let idx = lut.index(i, j, k);
                    let coords = [i, j, k];
                    for axis in 0..3 {
                        if coords[axis] + 1 < g {
                            let nb = idx + strides[axis];
                            let d = (e[nb] - e[idx]) * two_l;
                            grad[nb] += d;
                            grad[idx] = grad[idx] - d;
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Contracts a lattice gradient against the CP structure.
pub fn factor_gradients(factors: &CpFactors, lattice_grad: &[RgbColor]) -> Vec<RankComponent> {
    let g = factors.size();
    factors
        .components()
        .iter()
        .map(|comp| {
            let mut out = RankComponent::zeros(g);
            for k in 0..g {
                let wk = comp.w[k];
                for j in 0..g {
                    let vj = comp.v[j];
                    let base = g * (j + g * k);
                    for i in 0..g {
                        let gl = lattice_grad[base + i];
                        let proj = gl.r * comp.c[0] + gl.g * comp.c[1] + gl.b * comp.c[2];
                        let ui = comp.u[i];
                        out.u[i] += proj * vj * wk;
                        out.v[j] += proj * ui * wk;
                        out.w[k] += proj * ui * vj;
                        let uvw = ui * vj * wk;
                        out.c[0] += gl.r * uvw;
                        out.c[1] += gl.g * uvw;
                        out.c[2] += gl.b * uvw;
                    }
                }
            }
            out
        })
        .collect()
}

/// Loss and its gradient with respect to α and every CP factor. Only the
/// trilinear kernel is differentiated.
pub fn loss_and_gradients(
    input: &ImageBuffer,
    target: &ImageBuffer,
    model: &LorLutModel,
    w: &LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    let fwd = forward(input, target, model, w)?;
    let lut_grad = lattice_gradient(&fwd, target, w);

    let alphas = model
        .bases
        .iter()
        .map(|b| {
            b.entries()
                .iter()
                .zip(&lut_grad)
                .map(|(e, d)| e.r * d.r + e.g * d.g + e.b * d.b)
                .sum()
        })
        .collect();

    let residual_grad: Vec<RgbColor> = if w.residual > 0.0 {
        lut_grad
            .iter()
            .zip(fwd.residual.entries())
            .map(|(&d, &r)| d + r * (2.0 * w.residual))
            .collect()
    } else {
        lut_grad
    };
    let components = factor_gradients(&model.factors, &residual_grad);
    Ok((fwd.loss, Gradients { alphas, components }))
}

/// Gradient of the objective for one input/target pair.
pub fn backward(input: &ImageBuffer, target: &ImageBuffer, model: &LorLutModel, w: &LossWeights) -> Result<Gradients> {
    loss_and_gradients(input, target, model, w).map(|(_, g)| g)
}
