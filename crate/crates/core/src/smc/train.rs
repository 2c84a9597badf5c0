use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::objective::{scatter_gradient, scatter_loss, SmcObjective};
use super::{DecomposedPanel, ModificationMatrices, SmcConfig};
use crate::error::{Error, Result};
use crate::fusion::SimilarityWeights;
use crate::linalg::{orthonormalize_columns, Matrix};
use crate::tensor::Mode;

/// Iterations compared by the convergence test.
const CONVERGENCE_WINDOW: usize = 5;

/// Loss history of one mode. `losses[0]` is the loss at initialization
/// and the last entry is the loss of the returned matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrace {
    pub mode: usize,
    pub losses: Vec<f64>,
    /// `‖V^T V - I‖_max` after every accepted step, aligned with `losses`.
    pub orthonormality: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub alpha_halved: bool,
    /// `‖V‖_F` at initialization.
    pub initial_norm: f64,
}

impl ModeTrace {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace starts with the initial loss")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcTraining {
    pub matrices: ModificationMatrices,
    pub traces: [ModeTrace; 3],
    pub warnings: Vec<String>,
}

fn initial_v(rows: usize, cols: usize, cfg: &SmcConfig, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let v = Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
    if cfg.constrain_orthonormal {
        orthonormalize_columns(&v)
    } else {
        Ok(v)
    }
}

/// Full-batch ADAM on `tr(V^T S V)` starting from `init`.
///
/// Stops when the loss changes by less than `conv_tol` (relative) across
/// five iterations or after `iter_max` steps. If a step pushes the loss
/// more than 10% above the best seen so far, the step size is halved once.
/// The best iterate is returned, so the final loss never exceeds the
/// initial one.
pub fn train_mode(scatter: &Matrix, init: Matrix, cfg: &SmcConfig, mode: Mode) -> Result<(Matrix, ModeTrace)> {
    if scatter.rows() != init.rows() || scatter.cols() != init.rows() {
        return Err(Error::invalid("scatter and V disagree on the input dimension"));
    }
    let mut step_cfg = cfg.clone();
    let mut v = init;
    let mut state = AdamState::zeros(v.rows(), v.cols());
    let mut loss = scatter_loss(scatter, &v);
    let mut trace = ModeTrace {
        mode: mode.number(),
        losses: vec![loss],
        orthonormality: vec![v.orthonormality_defect()],
        iterations: 0,
        converged: loss == 0.0,
        alpha_halved: false,
        initial_norm: v.frobenius_norm(),
    };
    if !loss.is_finite() {
        return Err(Error::NumericFailure {
            iteration: 0,
            detail: "initial loss is not finite".into(),
        });
    }
    let (mut best, mut best_v) = (loss, v.clone());

    while !trace.converged && trace.iterations < cfg.iter_max {
        let it = trace.iterations + 1;
        let mut grad = scatter_gradient(scatter, &v);
        if cfg.constrain_orthonormal {
            grad = tangent_projection(&v, &grad)?;
        }
        let (next, next_state) = adam_step(&v, &grad, &state, &step_cfg).map_err(|e| match e {
            Error::NumericFailure { detail, .. } => Error::NumericFailure {
                iteration: it,
                detail: format!("{detail}; last finite loss {loss:e}"),
            },
            other => other,
        })?;
        let next_loss = scatter_loss(scatter, &next);
        if !next_loss.is_finite() {
            return Err(Error::NumericFailure {
                iteration: it,
                detail: format!("loss became non-finite; last finite loss {loss:e}"),
            });
        }
        v = next;
        state = next_state;
        loss = next_loss;
        trace.iterations = it;
        trace.losses.push(loss);
        trace.orthonormality.push(v.orthonormality_defect());

        if !trace.alpha_halved && loss > 1.1 * best {
            step_cfg.alpha *= 0.5;
            trace.alpha_halved = true;
        }
        if loss < best {
            best = loss;
            best_v = v.clone();
        }
        let n = trace.losses.len();
        if loss == 0.0 {
            trace.converged = true;
        } else if n > CONVERGENCE_WINDOW {
            let old = trace.losses[n - 1 - CONVERGENCE_WINDOW];
            trace.converged = (old - loss).abs() < cfg.conv_tol * old;
        }
    }
    if loss > best {
        v = best_v;
        trace.losses.push(best);
        trace.orthonormality.push(v.orthonormality_defect());
    }
    Ok((v, trace))
}

/// `G - V sym(V^T G)`: the part of `G` tangent to the orthonormal-columns
/// manifold at `V`. Feeding ADAM the raw gradient lets its per-entry
/// scaling turn the normal component into an ascent step after the QR
/// retraction.
fn tangent_projection(v: &Matrix, g: &Matrix) -> Result<Matrix> {
    let vtg = v.t_matmul(g)?;
    let sym = vtg.add(&vtg.transpose())?.scale(0.5);
    g.sub(&v.matmul(&sym)?)
}

fn train_with_scatters(
    scatters: [Matrix; 3],
    dims: [usize; 3],
    cfg: &SmcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SmcTraining> {
    let mut warnings = Vec::new();
    let mut vs = Vec::with_capacity(3);
    let mut traces = Vec::with_capacity(3);
    for (mode, scatter) in Mode::ALL.into_iter().zip(scatters) {
        let k = mode.index();
        let init = initial_v(dims[k], cfg.reduced_dims[k], cfg, rng)?;
        if scatter.max_abs() == 0.0 {
            warnings.push(format!(
                "mode {mode}: every weighted pair is identical or no weight is set; returning the initialization"
            ));
        }
        let (v, trace) = train_mode(&scatter, init, cfg, mode)?;
        vs.push(v);
        traces.push(trace);
    }
    Ok(SmcTraining {
        matrices: ModificationMatrices {
            v: vs.try_into().expect("three modes"),
        },
        traces: traces.try_into().expect("three modes"),
        warnings,
    })
}

/// Learns one shared `V_k` per mode. Modes are optimized independently,
/// each with its own ADAM state; initializations are drawn from one
/// seeded stream in mode order.
pub fn train_smc(panel: &DecomposedPanel, weights: &SimilarityWeights, cfg: &SmcConfig) -> Result<SmcTraining> {
    cfg.validate(panel.dims())?;
    let mut scatters = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let obj = SmcObjective::new(panel, weights, mode, cfg.cross_stock_weight)?;
        scatters.push(obj.scatter(None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = train_with_scatters(scatters.try_into().expect("three modes"), panel.dims(), cfg, &mut rng)?;
    if weights.total_pairs() == 0 {
        out.warnings.insert(0, "no nonzero similarity weights".into());
    }
    Ok(out)
}

/// Experimental variant with one `V_{s,k}` per stock, each fit on the
/// pairs that involve stock s.
pub fn train_smc_per_stock(
    panel: &DecomposedPanel,
    weights: &SimilarityWeights,
    cfg: &SmcConfig,
) -> Result<Vec<SmcTraining>> {
    cfg.validate(panel.dims())?;
    let objectives = Mode::ALL
        .into_iter()
        .map(|mode| SmcObjective::new(panel, weights, mode, cfg.cross_stock_weight))
        .collect::<Result<Vec<_>>>()?;
    (0..panel.num_stocks())
        .map(|s| {
            let scatters: Vec<Matrix> = objectives.iter().map(|o| o.scatter(Some(s))).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64 + 1));
            train_with_scatters(scatters.try_into().expect("three modes"), panel.dims(), cfg, &mut rng)
        })
        .collect()
}
