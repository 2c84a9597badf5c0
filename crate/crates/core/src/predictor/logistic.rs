//! Logistic regression on the concatenated input sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    bce_from_logit, check_training_set, predict, seeded_rng, sgd_train, sigmoid, Differentiable,
    SequenceClassifier, SequenceSample, TrainConfig,
};
use crate::error::{Error, Result};
use crate::fusion::Label;

/// Weights over `[x_1; ...; x_L]` followed by the bias in the last slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    params: Vec<f64>,
}

impl LogisticModel {
    pub fn weights(&self) -> &[f64] {
        &self.params[..self.params.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn logit(&self, sample: &SequenceSample) -> Result<f64> {
        let w = self.weights();
        let n: usize = sample.inputs.iter().map(Vec::len).sum();
        if n != w.len() {
            return Err(Error::invalid(format!("sample has {n} features, model expects {}", w.len())));
        }
        let dot: f64 = sample.inputs.iter().flatten().zip(w).map(|(x, w)| x * w).sum();
        Ok(dot + self.bias())
    }
}

impl Differentiable for LogisticModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn accumulate(&self, sample: &SequenceSample, grad: &mut [f64]) -> Result<f64> {
        let z = self.logit(sample)?;
        let y = if sample.is_up() { 1.0 } else { 0.0 };
        let d = sigmoid(z) - y;
        let last = grad.len() - 1;
        for (g, x) in grad[..last].iter_mut().zip(sample.inputs.iter().flatten()) {
            *g += d * x;
        }
        grad[last] += d;
        Ok(bce_from_logit(z, sample.is_up()))
    }
}

impl SequenceClassifier for LogisticModel {
    fn probability_up(&self, sample: &SequenceSample) -> Result<f64> {
        Ok(sigmoid(self.logit(sample)?))
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub loss_trace: Vec<f64>,
    /// Predictions on the training samples at cutoff 0.5.
    pub train_predictions: Vec<Label>,
}

/// Fits with the same SGD loop, clipping and seeding as the LSTM.
pub fn logistic_baseline(samples: &[SequenceSample], cfg: &TrainConfig) -> Result<LogisticFit> {
    cfg.validate()?;
    check_training_set(samples)?;
    let mut rng = seeded_rng(cfg.seed);
    let n = samples[0].inputs.len() * samples[0].feature_dim() + 1;
    let params = (0..n).map(|_| rng.random_range(-0.08..0.08)).collect();
    let mut model = LogisticModel { params };
    let loss_trace = sgd_train(&mut model, samples, cfg, &mut rng)?;
    let train_predictions = samples
        .iter()
        .map(|s| model.probability_up(s).map(|p| predict(p, 0.5)))
        .collect::<Result<_>>()?;
    Ok(LogisticFit { model, loss_trace, train_predictions })
}
