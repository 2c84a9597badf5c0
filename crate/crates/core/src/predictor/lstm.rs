//! Single-layer LSTM with a sigmoid readout on the last hidden state.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    bce_from_logit, check_training_set, seeded_rng, sgd_train, sigmoid, Differentiable, SequenceClassifier,
    SequenceSample, TrainConfig,
};
use crate::error::{Error, Result};

pub const LSTM_VERSION: u32 = 1;

const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "candidate"];
const INIT_RANGE: f64 = 0.08;

/// Gate weights act on `[x_t; h_{t-1}]`. Gate order is input, forget,
/// output, candidate. Everything lives in one flat vector so training and
/// clipping can treat it uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    input_dim: usize,
    hidden_dim: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::invalid("LSTM dimensions must be positive"));
        }
        let n = Self::param_count(input_dim, hidden_dim);
        Ok(Self { input_dim, hidden_dim, data: vec![0.0; n] })
    }

    pub fn random<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden_dim)?;
        for v in p.data.iter_mut() {
            *v = rng.random_range(-INIT_RANGE..INIT_RANGE);
        }
        Ok(p)
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        let h = hidden_dim;
        4 * h * (input_dim + h) + 4 * h + h + 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn concat_dim(&self) -> usize {
        self.input_dim + self.hidden_dim
    }

    fn weight_offset(&self, gate: usize) -> usize {
        gate * self.hidden_dim * self.concat_dim()
    }

    fn bias_offset(&self, gate: usize) -> usize {
        4 * self.hidden_dim * self.concat_dim() + gate * self.hidden_dim
    }

    fn readout_offset(&self) -> usize {
        self.bias_offset(4)
    }

    /// Row-major `hidden × (input + hidden)` block of one gate.
    pub fn gate_weights(&self, gate: usize) -> &[f64] {
        let o = self.weight_offset(gate);
        &self.data[o..o + self.hidden_dim * self.concat_dim()]
    }

    pub fn gate_bias(&self, gate: usize) -> &[f64] {
        let o = self.bias_offset(gate);
        &self.data[o..o + self.hidden_dim]
    }

    pub fn readout_weights(&self) -> &[f64] {
        let o = self.readout_offset();
        &self.data[o..o + self.hidden_dim]
    }

    pub fn readout_bias(&self) -> f64 {
        self.data[self.readout_offset() + self.hidden_dim]
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty input sequence"));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.input_dim) {
            return Err(Error::invalid(format!(
                "input vector has length {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    z: Vec<f64>,
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Intermediate values of one forward pass, consumed by [`lstm_backward`].
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

pub fn lstm_forward(params: &LstmParams, inputs: &[Vec<f64>]) -> Result<LstmCache> {
    let h = params.hidden_dim;
    lstm_forward_from(params, inputs, &vec![0.0; h], &vec![0.0; h])
}

/// Forward pass starting from the given hidden and cell states.
pub fn lstm_forward_from(params: &LstmParams, inputs: &[Vec<f64>], h0: &[f64], c0: &[f64]) -> Result<LstmCache> {
    params.check_inputs(inputs)?;
    let (x_dim, h_dim, k) = (params.input_dim, params.hidden_dim, params.concat_dim());
    if h0.len() != h_dim || c0.len() != h_dim {
        return Err(Error::invalid("initial state length does not match hidden_dim"));
    }
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut z = Vec::with_capacity(k);
        z.extend_from_slice(x);
        z.extend_from_slice(&h);
        let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
            let w = params.gate_weights(g);
            let b = params.gate_bias(g);
            (0..h_dim)
                .map(|r| {
                    let row = &w[r * k..(r + 1) * k];
                    let a = b[r] + row.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>();
                    if g == 3 {
                        a.tanh()
                    } else {
                        sigmoid(a)
                    }
                })
                .collect()
        });
        let c_prev = c.clone();
        for r in 0..h_dim {
            c[r] = gates[1][r] * c_prev[r] + gates[0][r] * gates[3][r];
        }
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        for r in 0..h_dim {
            h[r] = gates[2][r] * tanh_c[r];
        }
        debug_assert_eq!(z.len(), x_dim + h_dim);
        steps.push(StepCache { z, gates, c_prev, tanh_c });
    }
    let logit = params.readout_bias() + params.readout_weights().iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
    Ok(LstmCache { steps, hidden: h, cell: c, logit, probability: sigmoid(logit) })
}

/// Backpropagation through time of the binary cross-entropy for one
/// sample. Adds the gradient into `grad` (same layout as the parameters)
/// and returns the loss.
pub fn lstm_backward(params: &LstmParams, cache: &LstmCache, up: bool, grad: &mut [f64]) -> Result<f64> {
    if grad.len() != params.data.len() {
        return Err(Error::invalid("gradient buffer has the wrong length"));
    }
    let (x_dim, h_dim, k) = (params.input_dim, params.hidden_dim, params.concat_dim());
    let y = if up { 1.0 } else { 0.0 };
    let dlogit = cache.probability - y;

    let ro = params.readout_offset();
    for r in 0..h_dim {
        grad[ro + r] += dlogit * cache.hidden[r];
    }
    grad[ro + h_dim] += dlogit;

    let mut dh: Vec<f64> = params.readout_weights().iter().map(|w| dlogit * w).collect();
    let mut dc_next = vec![0.0; h_dim];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_dim]);
    for step in cache.steps.iter().rev() {
        let [i, f, o, g] = &step.gates;
        for r in 0..h_dim {
            let dc = dh[r] * o[r] * (1.0 - step.tanh_c[r] * step.tanh_c[r]) + dc_next[r];
            da[0][r] = dc * g[r] * i[r] * (1.0 - i[r]);
            da[1][r] = dc * step.c_prev[r] * f[r] * (1.0 - f[r]);
            da[2][r] = dh[r] * step.tanh_c[r] * o[r] * (1.0 - o[r]);
            da[3][r] = dc * i[r] * (1.0 - g[r] * g[r]);
            dc_next[r] = dc * f[r];
        }
        let mut dz = vec![0.0; k];
        for (gate, dag) in da.iter().enumerate() {
            let wo = params.weight_offset(gate);
            let bo = params.bias_offset(gate);
            let w = params.gate_weights(gate);
            for r in 0..h_dim {
                let a = dag[r];
                grad[bo + r] += a;
                let row = r * k;
                for (col, zc) in step.z.iter().enumerate() {
                    grad[wo + row + col] += a * zc;
                    dz[col] += w[row + col] * a;
                }
            }
        }
        dh.copy_from_slice(&dz[x_dim..]);
    }
    Ok(bce_from_logit(cache.logit, up))
}

impl Differentiable for LstmParams {
    fn params(&self) -> &[f64] {
        &self.data
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn accumulate(&self, sample: &SequenceSample, grad: &mut [f64]) -> Result<f64> {
        let cache = lstm_forward(self, &sample.inputs)?;
        lstm_backward(self, &cache, sample.is_up(), grad)
    }
}

impl SequenceClassifier for LstmParams {
    fn probability_up(&self, sample: &SequenceSample) -> Result<f64> {
        Ok(lstm_forward(self, &sample.inputs)?.probability)
    }
}

/// Trains from a uniform(-0.08, 0.08) initialization. Returns the fitted
/// parameters and the mean loss of every epoch.
pub fn train_lstm(samples: &[SequenceSample], cfg: &TrainConfig) -> Result<(LstmParams, Vec<f64>)> {
    cfg.validate()?;
    check_training_set(samples)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut params = LstmParams::random(samples[0].feature_dim(), cfg.hidden_dim, &mut rng)?;
    let trace = sgd_train(&mut params, samples, cfg, &mut rng)?;
    Ok((params, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
    row_major_values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LstmFile {
    lstm_version: u32,
    input_dim: usize,
    hidden_dim: usize,
    blocks: Vec<Block>,
}

pub fn save_lstm(params: &LstmParams, path: &Path) -> Result<()> {
    let (h, k) = (params.hidden_dim, params.concat_dim());
    // Blocks follow the in-memory order so loading is a sequential copy.
    let mut blocks = Vec::new();
    for (g, name) in GATE_NAMES.iter().enumerate() {
        blocks.push(Block {
            name: format!("{name}_weights"),
            rows: h,
            cols: k,
            row_major_values: params.gate_weights(g).to_vec(),
        });
    }
    for (g, name) in GATE_NAMES.iter().enumerate() {
        blocks.push(Block {
            name: format!("{name}_bias"),
            rows: h,
            cols: 1,
            row_major_values: params.gate_bias(g).to_vec(),
        });
    }
    blocks.push(Block {
        name: "readout_weights".into(),
        rows: 1,
        cols: h,
        row_major_values: params.readout_weights().to_vec(),
    });
    blocks.push(Block { name: "readout_bias".into(), rows: 1, cols: 1, row_major_values: vec![params.readout_bias()] });
    let file = LstmFile { lstm_version: LSTM_VERSION, input_dim: params.input_dim, hidden_dim: h, blocks };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_lstm(path: &Path) -> Result<LstmParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |message: String| Error::Format { path: path.to_path_buf(), message };
    let file: LstmFile = serde_json::from_str(&text).map_err(|e| fmt(e.to_string()))?;
    if file.lstm_version != LSTM_VERSION {
        return Err(fmt(format!("unsupported lstm_version {}", file.lstm_version)));
    }
    let mut params = LstmParams::zeros(file.input_dim, file.hidden_dim).map_err(|e| fmt(e.to_string()))?;
    let mut at = 0;
    for b in &file.blocks {
        if b.row_major_values.len() != b.rows * b.cols {
            return Err(fmt(format!("block {} has inconsistent shape", b.name)));
        }
        let end = at + b.row_major_values.len();
        if end > params.data.len() {
            return Err(fmt("more parameters than the declared dimensions allow".into()));
        }
        params.data[at..end].copy_from_slice(&b.row_major_values);
        at = end;
    }
    if at != params.data.len() {
        return Err(fmt("fewer parameters than the declared dimensions require".into()));
    }
    Ok(params)
}
