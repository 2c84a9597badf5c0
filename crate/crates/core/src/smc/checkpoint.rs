//! Versioned JSON checkpoint of learned modification matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModificationMatrices, SmcConfig, SmcTraining};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const SMC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub mode: usize,
    /// Owning stock for per-stock matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stock: Option<String>,
    pub rows: usize,
    pub cols: usize,
    pub row_major_values: Vec<f64>,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcCheckpoint {
    pub smc_version: u32,
    pub config: SmcConfig,
    pub matrices: Vec<CheckpointEntry>,
}

impl SmcCheckpoint {
    pub fn from_training(config: &SmcConfig, runs: &[(Option<String>, &SmcTraining)]) -> Self {
        let mut matrices = Vec::new();
        for (stock, run) in runs {
            for (v, trace) in run.matrices.v.iter().zip(&run.traces) {
                matrices.push(CheckpointEntry {
                    mode: trace.mode,
                    stock: stock.clone(),
                    rows: v.rows(),
                    cols: v.cols(),
                    row_major_values: v.as_slice().to_vec(),
                    loss_trace: trace.losses.clone(),
                });
            }
        }
        Self {
            smc_version: SMC_VERSION,
            config: config.clone(),
            matrices,
        }
    }

    /// Shared matrices (entries without a stock), in mode order.
    pub fn shared_matrices(&self) -> Result<ModificationMatrices> {
        let mut v: [Option<Matrix>; 3] = [None, None, None];
        for e in self.matrices.iter().filter(|e| e.stock.is_none()) {
            if !(1..=3).contains(&e.mode) {
                return Err(Error::invalid(format!("checkpoint mode {} out of range", e.mode)));
            }
            v[e.mode - 1] = Some(Matrix::from_vec(e.rows, e.cols, e.row_major_values.clone())?);
        }
        match v {
            [Some(a), Some(b), Some(c)] => Ok(ModificationMatrices { v: [a, b, c] }),
            _ => Err(Error::invalid("checkpoint lacks a shared matrix for every mode")),
        }
    }
}

pub fn save_checkpoint(ckpt: &SmcCheckpoint, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(ckpt).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SmcCheckpoint> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: SmcCheckpoint = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    if ckpt.smc_version != SMC_VERSION {
        return Err(Error::Format {
            path: path.into(),
            message: format!("unsupported smc_version {}", ckpt.smc_version),
        });
    }
    Ok(ckpt)
}
