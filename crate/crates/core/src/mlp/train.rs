use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{MlpModel, Workspace};
use crate::error::{Error, Result};
use crate::features::WindowFeatures;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: WindowFeatures,
    /// -1 for a correct association, +1 for an incorrect one.
    pub label: f64,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self {
            features: WindowFeatures(features),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Smooth L1 transition point.
    pub beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            momentum: 0.9,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            beta: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Config(format!("smooth L1 beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

pub fn smooth_l1(prediction: f64, target: f64, beta: f64) -> f64 {
    let e = (prediction - target).abs();
    if e < beta {
        0.5 * e * e / beta
    } else {
        e - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to the prediction.
pub fn smooth_l1_grad(prediction: f64, target: f64, beta: f64) -> f64 {
    let e = prediction - target;
    if e.abs() < beta {
        e / beta
    } else {
        e.signum()
    }
}

/// Mean squared error of the model's predictions.
pub fn mse(model: &MlpModel, data: &[LabeledExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = model.forward(&data.iter().map(|e| e.features.as_slice()).collect::<Vec<_>>())?;
    Ok(preds
        .iter()
        .zip(data)
        .map(|(p, e)| (p - e.label).powi(2))
        .sum::<f64>()
        / data.len() as f64)
}

/// Mini-batch SGD with momentum on the Smooth L1 loss. Returns the trained
/// model and the mean training loss of every epoch (each example's loss is
/// taken just before the update of its batch).
pub fn train(
    model: &MlpModel,
    data: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = model.input_dim();
    if let Some((i, e)) = data.iter().enumerate().find(|(_, e)| e.features.len() != d) {
        return Err(Error::Shape(format!(
            "example {i} has dimension {}, model expects {d}",
            e.features.len()
        )));
    }

    let mut model = model.clone();
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut losses = vec![0.0; data.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ws = Workspace::new(&model);
    let beta = cfg.beta;
    let loss = move |y: f64, t: f64| (smooth_l1(y, t, beta), smooth_l1_grad(y, t, beta));
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let e = &data[i];
                losses[i] = ws.accumulate(&model, e.features.as_slice(), e.label, &loss, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g * scale;
                *p -= cfg.learning_rate * *v;
            }
            model.set_params(&params)?;
        }
        let mean = losses.iter().sum::<f64>() / data.len() as f64;
        if !mean.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        trace.push(mean);
    }
    Ok((model, trace))
}

/// Writes a loss trace as `epoch,mean_loss` CSV (epochs numbered from 1).
pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
