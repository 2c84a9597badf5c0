use serde::{Deserialize, Serialize};

use super::SmcConfig;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, Matrix};

/// First moment `m`, second moment `v` and step counter of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub it: u64,
}

impl AdamState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            it: 0,
        }
    }
}

/// One ADAM update with bias correction, followed by a QR retraction onto
/// orthonormal columns when `cfg.constrain_orthonormal` is set.
pub fn adam_step(param: &Matrix, grad: &Matrix, state: &AdamState, cfg: &SmcConfig) -> Result<(Matrix, AdamState)> {
    if param.shape() != grad.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape() {
        return Err(Error::invalid(format!(
            "ADAM shapes disagree: param {:?}, grad {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    let it = state.it + 1;
    if !param.is_finite() || !grad.is_finite() {
        return Err(Error::NumericFailure {
            iteration: it as usize,
            detail: "non-finite parameter or gradient entering ADAM".into(),
        });
    }
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let m = state.m.zip_with(grad, |m, g| b1 * m + (1.0 - b1) * g)?;
    let v = state.v.zip_with(grad, |v, g| b2 * v + (1.0 - b2) * g * g)?;
    let c1 = 1.0 - b1.powi(it as i32);
    let c2 = 1.0 - b2.powi(it as i32);
    let mut next = param.clone();
    for ((p, &mi), &vi) in next.as_mut_slice().iter_mut().zip(m.as_slice()).zip(v.as_slice()) {
        let m_hat = mi / c1;
        let v_hat = vi / c2;
        *p -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    if cfg.constrain_orthonormal {
        next = orthonormalize_columns(&next).map_err(|e| match e {
            Error::NumericFailure { detail, .. } => Error::NumericFailure {
                iteration: it as usize,
                detail: format!("retraction failed: {detail}"),
            },
            other => other,
        })?;
    }
    if !next.is_finite() {
        return Err(Error::NumericFailure {
            iteration: it as usize,
            detail: "ADAM produced a non-finite parameter".into(),
        });
    }
    Ok((next, AdamState { m, v, it }))
}
