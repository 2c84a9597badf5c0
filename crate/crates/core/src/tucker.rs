//! Tucker factorization by truncated HOSVD with optional HOOI refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complete_basis, orthogonal_residual, symmetric_eigen, Matrix};
use crate::tensor::{multi_mode_product, mode_n_product, unfold, Mode, Tensor3};

/// Gram eigenvalues at or below this fraction of the largest one are
/// treated as zero; their singular vectors are replaced by a standard
/// basis completion.
const NULL_EIGEN_RATIO: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactors {
    pub core: Tensor3,
    /// `U_k` with shape `(I_k, D_k)` and orthonormal columns.
    pub factors: [Matrix; 3],
}

impl TuckerFactors {
    pub fn factor(&self, mode: Mode) -> &Matrix {
        &self.factors[mode.index()]
    }

    /// Dimensions `(I1, I2, I3)` of the tensor this factorization represents.
    pub fn full_dims(&self) -> [usize; 3] {
        [
            self.factors[0].rows(),
            self.factors[1].rows(),
            self.factors[2].rows(),
        ]
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }

    /// Largest orthonormality defect over the three factors.
    pub fn orthonormality_defect(&self) -> f64 {
        self.factors
            .iter()
            .map(Matrix::orthonormality_defect)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuckerConfig {
    pub ranks: [usize; 3],
    /// Zero means HOSVD only.
    pub hooi_max_iters: usize,
    /// Relative change in fit error that stops HOOI.
    pub hooi_tol: f64,
}

impl TuckerConfig {
    /// Ranks `ceil(I_k / 2)`, 25 HOOI sweeps, tolerance 1e-6.
    pub fn for_dims(dims: [usize; 3]) -> Self {
        Self {
            ranks: dims.map(|d| d.div_ceil(2)),
            hooi_max_iters: 25,
            hooi_tol: 1e-6,
        }
    }

    fn validate(&self, dims: [usize; 3]) -> Result<()> {
        for (k, (&r, &d)) in self.ranks.iter().zip(&dims).enumerate() {
            if r == 0 || r > d {
                return Err(Error::invalid(format!(
                    "Tucker rank {r} for mode {} must lie in 1..={d}",
                    k + 1
                )));
            }
        }
        if !(self.hooi_tol > 0.0) {
            return Err(Error::invalid("hooi_tol must be positive"));
        }
        Ok(())
    }
}

/// Flips `v` so that its largest-magnitude entry (lowest index on ties) is
/// nonnegative.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading `r` left singular vectors and singular values of `m`.
///
/// Computed from the Gram matrix of the smaller side with the Jacobi
/// solver. Vectors belonging to numerically zero singular values are
/// replaced by a completion from the standard basis, so a zero matrix
/// yields the leading identity columns.
pub fn svd_truncated(m: &Matrix, r: usize) -> Result<(Matrix, Vec<f64>)> {
    let (rows, cols) = m.shape();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::invalid(format!(
            "truncation rank {r} outside 1..={} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    leading_left_vectors(m, r)
}

/// Like [`svd_truncated`] but `r` may exceed the column count. Columns
/// past the rank of `m` come from the basis completion and carry a zero
/// singular value.
fn leading_left_vectors(m: &Matrix, r: usize) -> Result<(Matrix, Vec<f64>)> {
    let (rows, cols) = m.shape();
    if r == 0 || r > rows {
        return Err(Error::invalid(format!("need 1..={rows} left vectors, asked for {r}")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut sigma = Vec::with_capacity(r);

    if rows <= cols {
        let gram = m.matmul(&m.transpose())?;
        let eig = symmetric_eigen(&gram)?;
        let top = eig.values[0].max(0.0);
        for i in 0..r {
            let lambda = eig.values[i].max(0.0);
            sigma.push(lambda.sqrt());
            if top > 0.0 && lambda > NULL_EIGEN_RATIO * top {
                basis.push(eig.vectors.column(i));
            }
        }
    } else {
        let gram = m.t_matmul(m)?;
        let eig = symmetric_eigen(&gram)?;
        let top = eig.values[0].max(0.0);
        for i in 0..r.min(cols) {
            let lambda = eig.values[i].max(0.0);
            let s = lambda.sqrt();
            sigma.push(s);
            if top > 0.0 && lambda > NULL_EIGEN_RATIO * top {
                let v = eig.vectors.column(i);
                let u: Vec<f64> = (0..rows)
                    .map(|row| m.row(row).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / s)
                    .collect();
                let u = orthogonal_residual(&basis, &u);
                let len = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                basis.push(u.into_iter().map(|x| x / len).collect());
            }
        }
    }
    sigma.resize(r, 0.0);
    complete_basis(&mut basis, rows, r);
    if basis.len() != r {
        return Err(Error::NumericFailure {
            iteration: 0,
            detail: format!("could only complete {} of {r} singular vectors", basis.len()),
        });
    }
    for v in basis.iter_mut() {
        fix_sign(v);
    }
    Ok((Matrix::from_columns(rows, &basis), sigma))
}

fn project_core(t: &Tensor3, factors: &[Matrix; 3]) -> Result<Tensor3> {
    let ut = factors.each_ref().map(Matrix::transpose);
    multi_mode_product(t, [&ut[0], &ut[1], &ut[2]])
}

pub fn hosvd(t: &Tensor3, cfg: &TuckerConfig) -> Result<TuckerFactors> {
    cfg.validate(t.dims())?;
    let mut factors = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let (u, _) = leading_left_vectors(&unfold(t, mode), cfg.ranks[mode.index()])?;
        factors.push(u);
    }
    let factors: [Matrix; 3] = factors.try_into().expect("three modes");
    let core = project_core(t, &factors)?;
    Ok(TuckerFactors { core, factors })
}

/// HOOI refinement starting from HOSVD. See [`hooi_with_trace`].
pub fn hooi(t: &Tensor3, cfg: &TuckerConfig) -> Result<TuckerFactors> {
    hooi_with_trace(t, cfg).map(|(f, _)| f)
}

/// Runs HOOI and returns the relative fit error after HOSVD followed by
/// the error after every completed sweep.
pub fn hooi_with_trace(t: &Tensor3, cfg: &TuckerConfig) -> Result<(TuckerFactors, Vec<f64>)> {
    let mut current = hosvd(t, cfg)?;
    let mut errors = vec![reconstruction_error(t, &current)?];
    for _ in 0..cfg.hooi_max_iters {
        let prev = *errors.last().expect("nonempty");
        if prev == 0.0 {
            break;
        }
        let mut factors = current.factors.clone();
        for mode in Mode::ALL {
            // Project every other mode onto its current subspace.
            let mut y = t.clone();
            for other in Mode::ALL {
                if other != mode {
                    y = mode_n_product(&y, &factors[other.index()].transpose(), other)?;
                }
            }
            let (u, _) = leading_left_vectors(&unfold(&y, mode), cfg.ranks[mode.index()])?;
            factors[mode.index()] = u;
        }
        let core = project_core(t, &factors)?;
        let candidate = TuckerFactors { core, factors };
        let err = reconstruction_error(t, &candidate)?;
        current = candidate;
        errors.push(err);
        if (prev - err).abs() <= cfg.hooi_tol * prev {
            break;
        }
    }
    Ok((current, errors))
}

pub fn reconstruct(f: &TuckerFactors) -> Result<Tensor3> {
    let core_dims = f.core.dims();
    for mode in Mode::ALL {
        let u = f.factor(mode);
        if u.cols() != core_dims[mode.index()] {
            return Err(Error::invalid(format!(
                "factor {mode} is {}x{} but the core has {} entries along that mode",
                u.rows(),
                u.cols(),
                core_dims[mode.index()]
            )));
        }
    }
    multi_mode_product(&f.core, [&f.factors[0], &f.factors[1], &f.factors[2]])
}

/// `‖t - reconstruct(f)‖ / ‖t‖`.
///
/// When `t` is the zero tensor the absolute residual norm is returned
/// instead, which is 0 for a zero reconstruction.
pub fn reconstruction_error(t: &Tensor3, f: &TuckerFactors) -> Result<f64> {
    let r = reconstruct(f)?;
    let diff = t.sub(&r)?.frobenius_norm();
    let norm = t.frobenius_norm();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}
