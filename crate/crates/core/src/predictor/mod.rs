//! Movement classifiers over sequences of per-day feature vectors.

mod logistic;
mod lstm;

pub use logistic::{logistic_baseline, LogisticFit, LogisticModel};
pub use lstm::{
    load_lstm, lstm_backward, lstm_forward, lstm_forward_from, save_lstm, train_lstm, LstmCache, LstmParams,
    LSTM_VERSION,
};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Label;

/// `L` consecutive per-day feature vectors (oldest first) and the movement
/// of the following trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub stock_id: String,
    pub target_date: NaiveDate,
    pub input_dates: Vec<NaiveDate>,
    pub inputs: Vec<Vec<f64>>,
    pub target: Label,
}

impl SequenceSample {
    pub fn is_up(&self) -> bool {
        self.target == Label::Up
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub seed: u64,
    /// Days per input sequence.
    pub window: usize,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 60,
            batch_size: 16,
            clip_norm: 5.0,
            seed: 7,
            window: 5,
            hidden_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("learning_rate and clip_norm must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.window == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("epochs, batch_size, window and hidden_dim must be positive"));
        }
        Ok(())
    }
}

/// Up iff `probability_up > cutoff`; a tie goes to Down.
pub fn predict(probability_up: f64, cutoff: f64) -> Label {
    if probability_up > cutoff {
        Label::Up
    } else {
        Label::Down
    }
}

/// Anything that maps a sample to a probability of Up.
pub trait SequenceClassifier {
    fn probability_up(&self, sample: &SequenceSample) -> Result<f64>;

    fn predict(&self, sample: &SequenceSample, cutoff: f64) -> Result<Label> {
        Ok(predict(self.probability_up(sample)?, cutoff))
    }
}

/// A model with a flat parameter vector and a per-sample loss gradient.
pub(crate) trait Differentiable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Binary cross-entropy of one sample; adds its gradient into `grad`.
    fn accumulate(&self, sample: &SequenceSample, grad: &mut [f64]) -> Result<f64>;
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` computed from the logit.
pub(crate) fn bce_from_logit(logit: f64, up: bool) -> f64 {
    let softplus = if logit > 0.0 {
        logit + (-logit).exp().ln_1p()
    } else {
        logit.exp().ln_1p()
    };
    if up {
        softplus - logit
    } else {
        softplus
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm after clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    } else {
        norm
    }
}

pub(crate) fn check_training_set(samples: &[SequenceSample]) -> Result<()> {
    let first = samples.first().ok_or_else(|| Error::invalid("no training samples"))?;
    let (len, dim) = (first.inputs.len(), first.feature_dim());
    if len == 0 || dim == 0 {
        return Err(Error::invalid("samples need at least one nonempty input vector"));
    }
    let mut up = false;
    let mut down = false;
    for s in samples {
        if s.inputs.len() != len || s.inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::invalid("all samples must share sequence length and feature dim"));
        }
        match s.target {
            Label::Up => up = true,
            Label::Down => down = true,
            Label::Still => return Err(Error::invalid("Still targets cannot be trained on")),
        }
    }
    if !(up && down) {
        return Err(Error::invalid("training data contains a single class"));
    }
    Ok(())
}

/// Minibatch SGD with global-norm clipping. The visiting order comes from
/// a ChaCha stream seeded by `cfg.seed`; returns the mean training loss of
/// every epoch.
pub(crate) fn sgd_train<M: Differentiable>(
    model: &mut M,
    samples: &[SequenceSample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n_params = model.params().len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; n_params];
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                total += model.accumulate(&samples[i], &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_global_norm(&mut grad, cfg.clip_norm);
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NumericFailure {
                iteration: epoch + 1,
                detail: "training loss became non-finite".into(),
            });
        }
        trace.push(mean);
    }
    Ok(trace)
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-feature z-score statistics over every input vector of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(samples: &[SequenceSample]) -> Result<Self> {
        let dim = samples
            .first()
            .map(SequenceSample::feature_dim)
            .ok_or_else(|| Error::invalid("cannot fit a scaler on no samples"))?;
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        for x in samples.iter().flat_map(|s| &s.inputs) {
            n += 1;
            sum.iter_mut().zip(x).for_each(|(a, v)| *a += v);
        }
        let mean: Vec<f64> = sum.iter().map(|a| a / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for x in samples.iter().flat_map(|s| &s.inputs) {
            for ((a, v), m) in sq.iter_mut().zip(x).zip(&mean) {
                *a += (v - m) * (v - m);
            }
        }
        let std = sq
            .iter()
            .map(|a| {
                let sd = (a / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, samples: &[SequenceSample]) -> Vec<SequenceSample> {
        samples
            .iter()
            .map(|s| {
                let mut s = s.clone();
                for x in s.inputs.iter_mut() {
                    for ((v, m), sd) in x.iter_mut().zip(&self.mean).zip(&self.std) {
                        *v = (*v - m) / sd;
                    }
                }
                s
            })
            .collect()
    }
}
