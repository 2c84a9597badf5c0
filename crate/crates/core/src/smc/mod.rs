//! Sub-mode coordinate alignment.
//!
//! For each mode k a modification matrix `V_k` (shape `I_k x J_k`) is
//! learned so that the projected subspaces `V_k^T U_k` of similar tensors
//! agree. Similar pairs come from two sources: days of one stock with
//! close p-change (`W_s`), and correlated stocks on one day (`Z_t`). The
//! objective for mode k is
//!
//! ```text
//! sum_s sum_{i<j} w_sij ‖V^T U^{s,i} - V^T U^{s,j}‖² + λ sum_t sum_{s<m} z_tsm ‖V^T U^{m,t} - V^T U^{s,t}‖²
//! ```
//!
//! which equals `tr(V^T S V)` for the pair scatter `S = sum weight ΔU ΔU^T`.
//! Training minimizes it with ADAM; by default each step is followed by a
//! QR retraction onto orthonormal columns, without which `V = 0` is the
//! minimizer.

mod adam;
mod checkpoint;
mod instance;
mod objective;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry, SmcCheckpoint, SMC_VERSION};
pub use instance::{two_cluster_instance, TwoClusterSpec};
pub use objective::{smc_gradient, smc_loss, SmcObjective};
pub use train::{train_mode, train_smc, train_smc_per_stock, ModeTrace, SmcTraining};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::{multi_mode_product, Mode, Tensor3};
use crate::tucker::TuckerFactors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    /// `(J1, J2, J3)`, each at most the matching `I_k`.
    pub reduced_dims: [usize; 3],
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub iter_max: usize,
    /// Relative loss change over a 5-iteration window that counts as converged.
    pub conv_tol: f64,
    pub constrain_orthonormal: bool,
    /// λ, the weight of the cross-stock term.
    pub cross_stock_weight: f64,
    /// Learn one `V_k` per stock instead of one shared per mode.
    pub per_stock: bool,
    pub seed: u64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            reduced_dims: [3, 4, 2],
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            iter_max: 500,
            conv_tol: 1e-6,
            constrain_orthonormal: true,
            cross_stock_weight: 1.0,
            per_stock: false,
            seed: 7,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self, dims: [usize; 3]) -> Result<()> {
        for (k, (&j, &i)) in self.reduced_dims.iter().zip(&dims).enumerate() {
            if j == 0 || j > i {
                return Err(Error::invalid(format!(
                    "reduced dim J{} = {j} must lie in 1..={i}",
                    k + 1
                )));
            }
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be positive"));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.adam_eps > 0.0) || !(self.conv_tol > 0.0) {
            return Err(Error::invalid("adam_eps and conv_tol must be positive"));
        }
        if self.iter_max == 0 {
            return Err(Error::invalid("iter_max must be positive"));
        }
        if !(self.cross_stock_weight >= 0.0) {
            return Err(Error::invalid("cross_stock_weight must be nonnegative"));
        }
        Ok(())
    }
}

/// The learned `V_1, V_2, V_3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationMatrices {
    pub v: [Matrix; 3],
}

impl ModificationMatrices {
    pub fn get(&self, mode: Mode) -> &Matrix {
        &self.v[mode.index()]
    }

    pub fn reduced_dims(&self) -> [usize; 3] {
        [self.v[0].cols(), self.v[1].cols(), self.v[2].cols()]
    }

    /// `V_k = I` truncated to `J_k` columns.
    pub fn identity(dims: [usize; 3], reduced: [usize; 3]) -> Self {
        Self {
            v: [0, 1, 2].map(|k| Matrix::eye(dims[k], reduced[k])),
        }
    }
}

/// Tucker factors of every present (stock, day) tensor over a block of days.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPanel {
    num_stocks: usize,
    num_days: usize,
    dims: [usize; 3],
    ranks: [usize; 3],
    /// Stock-major grid.
    cells: Vec<Option<TuckerFactors>>,
}

impl DecomposedPanel {
    pub fn new(num_stocks: usize, num_days: usize, cells: Vec<Option<TuckerFactors>>) -> Result<Self> {
        if cells.len() != num_stocks * num_days {
            return Err(Error::invalid(format!(
                "{} cells for a {num_stocks}x{num_days} grid",
                cells.len()
            )));
        }
        let first = cells
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::invalid("decomposed panel has no tensors"))?;
        let dims = first.full_dims();
        let ranks = first.ranks();
        for f in cells.iter().flatten() {
            if f.full_dims() != dims || f.ranks() != ranks {
                return Err(Error::invalid("all factorizations must share dims and ranks"));
            }
            if f.orthonormality_defect() > 1e-8 {
                return Err(Error::invalid("factor matrix without orthonormal columns"));
            }
        }
        Ok(Self {
            num_stocks,
            num_days,
            dims,
            ranks,
            cells,
        })
    }

    pub fn num_stocks(&self) -> usize {
        self.num_stocks
    }

    pub fn num_days(&self) -> usize {
        self.num_days
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.ranks
    }

    pub fn factors(&self, s: usize, t: usize) -> Option<&TuckerFactors> {
        self.cells[s * self.num_days + t].as_ref()
    }

    pub fn present(&self) -> usize {
        self.cells.iter().flatten().count()
    }
}

/// `core ×_1 (V_1^T U_1) ×_2 (V_2^T U_2) ×_3 (V_3^T U_3)`, a `(J1, J2, J3)` tensor.
pub fn reduce_tensor(f: &TuckerFactors, v: &ModificationMatrices) -> Result<Tensor3> {
    let mut maps = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let u = f.factor(mode);
        let vk = v.get(mode);
        if vk.rows() != u.rows() {
            return Err(Error::invalid(format!(
                "V_{mode} has {} rows but U_{mode} has {}",
                vk.rows(),
                u.rows()
            )));
        }
        maps.push(vk.t_matmul(u)?);
    }
    multi_mode_product(&f.core, [&maps[0], &maps[1], &maps[2]])
}
