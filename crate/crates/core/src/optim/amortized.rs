//! Amortized prediction of (α, CP factors) from global image statistics.
//!
//! A fixed 105-value descriptor feeds one `tanh` hidden layer and a linear
//! head. The head output is added to a fixed parameter offset (the same
//! initialization a per-image fit starts from), so a zero head predicts an
//! identity-preserving model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LutError, Result};
use crate::image::ImageBuffer;
use crate::lowrank::LorLutModel;
use crate::lut::Lut3D;
use crate::optim::adamw::{adamw_step, AdamState};
use crate::optim::fit::{default_bases, init_model, FitConfig};
use crate::optim::grad::{flatten_params, loss_and_gradients, param_count, unflatten_params};
use crate::optim::loss::LossWeights;

pub const HISTOGRAM_BINS: usize = 32;
pub const FEATURE_LEN: usize = 3 * HISTOGRAM_BINS + 9;

/// Per-channel 32-bin histograms (each summing to 1), then per-channel means,
/// standard deviations and the (rg, rb, gb) Pearson correlations.
pub fn extract_global_features(img: &ImageBuffer) -> Result<Vec<f64>> {
    if img.is_empty() {
        return Err(LutError::EmptyImage);
    }
    let n = img.len() as f64;
    let mut feats = vec![0.0; FEATURE_LEN];
    let mut mean = [0.0; 3];
    for p in img.pixels() {
        let p = p.clamp01();
        for ch in 0..3 {
            let bin = ((p[ch] * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            feats[ch * HISTOGRAM_BINS + bin] += 1.0;
            mean[ch] += p[ch];
        }
    }
    feats[..3 * HISTOGRAM_BINS].iter_mut().for_each(|v| *v /= n);
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = [[0.0; 3]; 3];
    for p in img.pixels() {
        let p = p.clamp01();
        let d = [p.r - mean[0], p.g - mean[1], p.b - mean[2]];
        for a in 0..3 {
            for b in a..3 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    let std: Vec<f64> = (0..3).map(|ch| (cov[ch][ch] / n).sqrt()).collect();
    let corr = |a: usize, b: usize| {
        if cov[a][a] > 0.0 && cov[b][b] > 0.0 {
            (cov[a][b] / (cov[a][a] * cov[b][b]).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    };
    let off = 3 * HISTOGRAM_BINS;
    feats[off..off + 3].copy_from_slice(&mean);
    feats[off + 3..off + 6].copy_from_slice(&std);
    feats[off + 6] = corr(0, 1);
    feats[off + 7] = corr(0, 2);
    feats[off + 8] = corr(1, 2);
    Ok(feats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizedPredictor {
    pub hidden: usize,
    /// Template model carrying grid size, bases and the parameter offset.
    pub template: LorLutModel,
    /// `hidden × FEATURE_LEN`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `outputs × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl AmortizedPredictor {
    /// Random first layer, zero output head.
    pub fn new(config: &FitConfig, bases: Vec<Lut3D>, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(LutError::InvalidConfig("hidden width must be positive".into()));
        }
        let template = init_model(config, bases)?;
        let outputs = param_count(&template);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
        let normal = Normal::new(0.0, 1.0 / (FEATURE_LEN as f64).sqrt()).expect("valid deviation");
        Ok(Self {
            hidden,
            template,
            w1: (0..hidden * FEATURE_LEN).map(|_| normal.sample(&mut rng)).collect(),
            b1: vec![0.0; hidden],
            w2: vec![0.0; outputs * hidden],
            b2: vec![0.0; outputs],
        })
    }

    pub fn outputs(&self) -> usize {
        self.b2.len()
    }

    pub fn trainable(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_trainable(&mut self, p: &[f64]) -> Result<()> {
        let (n1, n2, n3, n4) = (self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len());
        if p.len() != n1 + n2 + n3 + n4 {
            return Err(LutError::ShapeMismatch(format!(
                "expected {} predictor weights, got {}",
                n1 + n2 + n3 + n4,
                p.len()
            )));
        }
        self.w1.copy_from_slice(&p[..n1]);
        self.b1.copy_from_slice(&p[n1..n1 + n2]);
        self.w2.copy_from_slice(&p[n1 + n2..n1 + n2 + n3]);
        self.b2.copy_from_slice(&p[n1 + n2 + n3..]);
        Ok(())
    }

    fn hidden_activations(&self, feats: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * FEATURE_LEN..(h + 1) * FEATURE_LEN];
                (row.iter().zip(feats).map(|(w, f)| w * f).sum::<f64>() + self.b1[h]).tanh()
            })
            .collect()
    }

    fn head(&self, act: &[f64]) -> Vec<f64> {
        let offset = flatten_params(&self.template);
        (0..self.outputs())
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                offset[o] + self.b2[o] + row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    /// Predicts a model for one input image.
    pub fn predict(&self, img: &ImageBuffer) -> Result<LorLutModel> {
        let feats = extract_global_features(img)?;
        let params = self.head(&self.hidden_activations(&feats));
        let mut model = self.template.clone();
        unflatten_params(&mut model, &params)?;
        Ok(model)
    }
}

/// Mean loss over `pairs` and its gradient with respect to
/// [`AmortizedPredictor::trainable`].
pub fn predictor_loss_and_gradients(
    predictor: &AmortizedPredictor,
    pairs: &[(ImageBuffer, ImageBuffer)],
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let hidden = predictor.hidden;
    let outputs = predictor.outputs();
    let scale = 1.0 / pairs.len() as f64;
    let mut gw1 = vec![0.0; predictor.w1.len()];
    let mut gb1 = vec![0.0; hidden];
    let mut gw2 = vec![0.0; predictor.w2.len()];
    let mut gb2 = vec![0.0; outputs];
    let mut total = 0.0;

    for (input, target) in pairs {
        let feats = extract_global_features(input)?;
        let act = predictor.hidden_activations(&feats);
        let mut model = predictor.template.clone();
        unflatten_params(&mut model, &predictor.head(&act))?;
        let (loss, grads) = loss_and_gradients(input, target, &model, weights)?;
        total += loss.total * scale;
        let g_out = grads.flatten();

        let mut g_act = vec![0.0; hidden];
        for o in 0..outputs {
            let go = g_out[o] * scale;
            gb2[o] += go;
            let row = o * hidden;
            for h in 0..hidden {
                gw2[row + h] += go * act[h];
                g_act[h] += go * predictor.w2[row + h];
            }
        }
        for h in 0..hidden {
            let g_pre = g_act[h] * (1.0 - act[h] * act[h]);
            gb1[h] += g_pre;
            let row = h * FEATURE_LEN;
            for (f, &x) in feats.iter().enumerate() {
                gw1[row + f] += g_pre * x;
            }
        }
    }
    let mut grad = gw1;
    grad.extend(gb1);
    grad.extend(gw2);
    grad.extend(gb2);
    Ok((total, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizedReport {
    /// Mean training loss before each step, plus the final loss last.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
}

/// Trains an amortized predictor on image pairs with AdamW.
pub fn train_amortized(
    pairs: &[(ImageBuffer, ImageBuffer)],
    config: &FitConfig,
    hidden: usize,
) -> Result<(AmortizedPredictor, AmortizedReport)> {
    config.validate()?;
    if pairs.len() < 2 {
        return Err(LutError::InvalidConfig("amortized training needs at least 2 pairs".into()));
    }
    for (input, target) in pairs {
        input.ensure_same_dims(target)?;
    }
    let bases = default_bases(config.grid, config.bases)?;
    let mut predictor = AmortizedPredictor::new(config, bases, hidden)?;
    let opt = config.optimizer();
    let mut params = predictor.trainable();
    let mut state = AdamState::new(params.len());
    let mut loss_trace = Vec::with_capacity(config.steps + 1);
    for t in 1..=config.steps {
        let (loss, grad) = predictor_loss_and_gradients(&predictor, pairs, &config.weights)?;
        if !loss.is_finite() {
            return Err(LutError::NonFiniteLoss {
                step: t,
                detail: "amortized training loss".into(),
            });
        }
        loss_trace.push(loss);
        adamw_step(&mut params, &grad, &mut state, t, &opt)?;
        predictor.set_trainable(&params)?;
    }
    let (final_loss, _) = predictor_loss_and_gradients(&predictor, pairs, &config.weights)?;
    loss_trace.push(final_loss);
    Ok((predictor, AmortizedReport { loss_trace, final_loss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::RgbColor;

    #[test]
    fn gray_features() {
        let img = ImageBuffer::filled(5, 4, RgbColor::splat(0.5));
        let f = extract_global_features(&img).unwrap();
        assert_eq!(f.len(), 105);
        for ch in 0..3 {
            let hist = &f[ch * 32..(ch + 1) * 32];
            assert_eq!(hist.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(hist.iter().sum::<f64>(), 1.0);
        }
        assert_eq!(&f[96..99], &[0.5, 0.5, 0.5]);
        assert_eq!(&f[99..105], &[0.0; 6]);
    }

    #[test]
    fn empty_image_errors() {
        let img = ImageBuffer::filled(0, 0, RgbColor::ZERO);
        assert_eq!(extract_global_features(&img), Err(LutError::EmptyImage));
    }

    #[test]
    fn zero_head_predicts_identity_residual() {
        let cfg = FitConfig {
            grid: 5,
            rank: 3,
            ..FitConfig::default()
        };
        let p = AmortizedPredictor::new(&cfg, vec![], 4).unwrap();
        let img = ImageBuffer::from_fn(6, 6, |x, y| RgbColor::new(x as f64 / 6.0, y as f64 / 6.0, 0.4));
        let m = p.predict(&img).unwrap();
        assert_eq!(m.basis_count(), 0);
        assert!(m.factors.components().iter().all(|c| c.c == [0.0; 3]));
        let lut = crate::lowrank::compose_lut(&m, &crate::lowrank::ComponentScales::ones(3)).unwrap();
        assert_eq!(lut, crate::lut::identity_lut(5).unwrap());
    }

    #[test]
    fn training_needs_two_pairs() {
        let img = ImageBuffer::filled(4, 4, RgbColor::splat(0.2));
        let cfg = FitConfig {
            grid: 3,
            rank: 1,
            steps: 1,
            ..FitConfig::default()
        };
        assert!(train_amortized(&[(img.clone(), img)], &cfg, 2).is_err());
    }
}
