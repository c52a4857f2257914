//! Per-image fitting of fusion weights and CP factors.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;
use crate::lowrank::{compose_lut, ComponentScales, CpFactors, LorLutModel, RankComponent};
use crate::lut::{apply_to_image, identity_lut, InterpKind, Lut3D};
use crate::metrics::{mean_delta_e00, psnr, ssim, Psnr, SSIM_WINDOW};
use crate::optim::adamw::{adamw_step, AdamState, AdamWConfig, LrSchedule};
use crate::optim::grad::{flatten_params, loss_and_gradients, unflatten_params};
use crate::optim::loss::{LossBreakdown, LossWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub steps: usize,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub weights: LossWeights,
    pub rank: usize,
    pub bases: usize,
    pub grid: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            base_lr: 5e-3,
            schedule: LrSchedule::Cosine,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
            weights: LossWeights::default(),
            rank: 8,
            bases: 0,
            grid: 33,
            seed: 0,
            log_every: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(LutError::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(LutError::InvalidConfig("learning rate must be positive".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0) {
            return Err(LutError::InvalidConfig("betas must lie in (0, 1)".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(LutError::InvalidConfig("eps must be positive and weight decay non-negative".into()));
        }
        if self.grid < 2 {
            return Err(LutError::GridTooSmall(self.grid));
        }
        self.weights.validate()
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            base_lr: self.base_lr,
            betas: self.betas,
            eps: self.eps,
            weight_decay: self.weight_decay,
            schedule: self.schedule,
            total_steps: self.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    /// Running minimum of the total loss up to this step.
    pub best_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub loss: f64,
    pub psnr: Psnr,
    /// `None` when the image is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub mean_delta_e00: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub steps: usize,
    pub trace: Vec<LogEntry>,
    pub final_metrics: FinalMetrics,
    pub duration_ms: f64,
}

/// Fixed basis LUTs used when fitting with `K > 0` and none are supplied:
/// the identity followed by per-channel power curves.
pub fn default_bases(grid: usize, count: usize) -> Result<Vec<Lut3D>> {
    const GAMMAS: [f64; 6] = [0.6, 1.6, 0.8, 1.25, 0.45, 2.2];
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k == 0 {
            out.push(identity_lut(grid)?);
        } else {
            let gamma = GAMMAS[(k - 1) % GAMMAS.len()];
            out.push(identity_lut(grid)?.map(|e| RgbColor::new(e.r.powf(gamma), e.g.powf(gamma), e.b.powf(gamma))));
        }
    }
    Ok(out)
}

/// Axis factors from `N(0, 1/√G)`, color coefficients zero, so the initial
/// residual vanishes while `c` still receives gradient.
pub fn init_factors(grid: usize, rank: usize, rng: &mut ChaCha8Rng) -> Result<CpFactors> {
    let normal = Normal::new(0.0, 1.0 / (grid as f64).sqrt()).expect("valid deviation");
    let comps = (0..rank)
        .map(|_| RankComponent {
            u: (0..grid).map(|_| normal.sample(rng)).collect(),
            v: (0..grid).map(|_| normal.sample(rng)).collect(),
            w: (0..grid).map(|_| normal.sample(rng)).collect(),
            c: [0.0; 3],
        })
        .collect();
    CpFactors::new(grid, comps)
}

/// Initial model for a fit: bases with uniform weights `1/K` and fresh factors.
pub fn init_model(config: &FitConfig, bases: Vec<Lut3D>) -> Result<LorLutModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let factors = init_factors(config.grid, config.rank, &mut rng)?;
    let k = bases.len();
    let alphas = vec![if k == 0 { 0.0 } else { 1.0 / k as f64 }; k];
    LorLutModel::new(config.grid, bases, alphas, factors)
}

pub(crate) fn final_metrics(input: &ImageBuffer, target: &ImageBuffer, model: &LorLutModel, loss: f64) -> Result<FinalMetrics> {
    let lut = compose_lut(model, &ComponentScales::ones(model.rank()))?;
    let out = apply_to_image(&lut, input, InterpKind::Trilinear, true);
    let ssim = if input.width() >= SSIM_WINDOW && input.height() >= SSIM_WINDOW {
        Some(ssim(&out, target)?)
    } else {
        None
    };
    Ok(FinalMetrics {
        loss,
        psnr: psnr(&out, target)?,
        ssim,
        mean_delta_e00: mean_delta_e00(&out, target)?,
    })
}

/// Fits a model to one input/target pair with [`default_bases`].
pub fn fit_image_pair(input: &ImageBuffer, target: &ImageBuffer, config: &FitConfig) -> Result<(LorLutModel, FitReport)> {
    config.validate()?;
    let bases = default_bases(config.grid, config.bases)?;
    fit_with_bases(input, target, config, bases)
}

/// Fits α and the CP factors with the given (fixed) basis LUTs.
pub fn fit_with_bases(
    input: &ImageBuffer,
    target: &ImageBuffer,
    config: &FitConfig,
    bases: Vec<Lut3D>,
) -> Result<(LorLutModel, FitReport)> {
    config.validate()?;
    input.ensure_same_dims(target)?;
    if input.is_empty() {
        return Err(LutError::EmptyImage);
    }
    let started = Instant::now();
    let mut model = init_model(config, bases)?;
    let opt = config.optimizer();
    let mut params = flatten_params(&model);
    let mut state = AdamState::new(params.len());
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let log_every = config.log_every.max(1);

    for t in 1..=config.steps {
        let (loss, grads) = loss_and_gradients(input, target, &model, &config.weights)?;
        if !loss.total.is_finite() {
            return Err(LutError::NonFiniteLoss {
                step: t,
                detail: format!("{loss:?}"),
            });
        }
        best = best.min(loss.total);
        if t == 1 || t % log_every == 0 || t == config.steps {
            trace.push(LogEntry {
                step: t,
                lr: opt.learning_rate(t),
                loss,
                best_total: best,
            });
        }
        let flat = grads.flatten();
        if flat.iter().any(|g| !g.is_finite()) {
            return Err(LutError::NonFiniteLoss {
                step: t,
                detail: "non-finite gradient".into(),
            });
        }
        adamw_step(&mut params, &flat, &mut state, t, &opt)?;
        unflatten_params(&mut model, &params).map_err(|e| LutError::NonFiniteLoss {
            step: t,
            detail: e.to_string(),
        })?;
    }

    let (loss, _) = loss_and_gradients(input, target, &model, &config.weights)?;
    let final_metrics = final_metrics(input, target, &model, loss.total)?;
    Ok((
        model,
        FitReport {
            steps: config.steps,
            trace,
            final_metrics,
            duration_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    ))
}
