//! A constructed panel with a known good alignment, for exercising the
//! optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::DecomposedPanel;
use crate::error::{Error, Result};
use crate::fusion::{BinaryUpper, SimilarityWeights};
use crate::linalg::{orthonormalize_columns, Matrix};
use crate::tensor::Tensor3;
use crate::tucker::TuckerFactors;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClusterSpec {
    pub stocks_per_group: usize,
    pub days: usize,
    pub dims: [usize; 3],
    pub ranks: [usize; 3],
    /// `J_k`: the size of the block every group member agrees on.
    pub reduced_dims: [usize; 3],
    /// Weight of the group-shared block in each factor, in (0, 1).
    pub shared_weight: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for TwoClusterSpec {
    fn default() -> Self {
        Self {
            stocks_per_group: 3,
            days: 20,
            dims: [6, 8, 4],
            ranks: [2, 3, 2],
            reduced_dims: [3, 4, 2],
            shared_weight: 0.8,
            noise: 1e-3,
            seed: 11,
        }
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Two groups of stocks. In mode k every factor is
///
/// ```text
/// U = orth([c P_g ; sqrt(1 - c²) R_st] + noise)
/// ```
///
/// where `P_g` (`J_k x D_k`) is shared by group g and `R_st` is drawn per
/// cell. `W_s` links every pair of days of a stock and `Z_t` links stocks
/// of the same group, so `V_k` spanning the first `J_k` coordinates
/// leaves only the noise in the loss.
pub fn two_cluster_instance(spec: &TwoClusterSpec) -> Result<(DecomposedPanel, SimilarityWeights)> {
    for k in 0..3 {
        let (i, d, j) = (spec.dims[k], spec.ranks[k], spec.reduced_dims[k]);
        if d == 0 || j < d || j >= i || i - j < d {
            return Err(Error::invalid(format!(
                "mode {}: need D <= J and D <= I - J with J < I, got I={i} D={d} J={j}",
                k + 1
            )));
        }
    }
    if !(spec.shared_weight > 0.0 && spec.shared_weight < 1.0) || spec.stocks_per_group == 0 || spec.days < 2 {
        return Err(Error::invalid("shared_weight must lie in (0, 1), with stocks and at least two days"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.shared_weight;
    let rest = (1.0 - c * c).sqrt();
    let shared: Vec<Vec<Matrix>> = (0..2)
        .map(|_| {
            (0..3)
                .map(|k| orthonormalize_columns(&gaussian(spec.reduced_dims[k], spec.ranks[k], &mut rng)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let n_s = 2 * spec.stocks_per_group;
    let mut cells = Vec::with_capacity(n_s * spec.days);
    for s in 0..n_s {
        let g = s % 2;
        for _ in 0..spec.days {
            let mut factors = Vec::with_capacity(3);
            for k in 0..3 {
                let (i, d, j) = (spec.dims[k], spec.ranks[k], spec.reduced_dims[k]);
                let own = orthonormalize_columns(&gaussian(i - j, d, &mut rng))?;
                let p = &shared[g][k];
                let raw = Matrix::from_fn(i, d, |r, col| {
                    if r < j {
                        c * p[(r, col)]
                    } else {
                        rest * own[(r - j, col)]
                    }
                });
                let jitter = gaussian(i, d, &mut rng).scale(spec.noise);
                factors.push(orthonormalize_columns(&raw.add(&jitter)?)?);
            }
            let core = Tensor3::from_fn(spec.ranks, |_, _, _| rng.sample(StandardNormal))?;
            cells.push(Some(TuckerFactors {
                core,
                factors: factors.try_into().expect("three modes"),
            }));
        }
    }
    let panel = DecomposedPanel::new(n_s, spec.days, cells)?;

    let mut w = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let mut m = BinaryUpper::zeros(spec.days);
        for i in 0..spec.days {
            for j in i + 1..spec.days {
                m.set(i, j)?;
            }
        }
        w.push(m);
    }
    let mut z = Vec::with_capacity(spec.days);
    for _ in 0..spec.days {
        let mut m = BinaryUpper::zeros(n_s);
        for a in 0..n_s {
            for b in a + 1..n_s {
                if a % 2 == b % 2 {
                    m.set(a, b)?;
                }
            }
        }
        z.push(m);
    }
    Ok((panel, SimilarityWeights::from_matrices(w, z)))
}
