//! Dense third-order tensors.
//!
//! Storage is row-major with the last index varying fastest. Mode-n
//! unfoldings place mode n on the rows; the remaining two modes index the
//! columns in increasing mode order with the first of them varying
//! slowest, so for mode 1 the column of `(i, j, k)` is `j * I3 + k`, for
//! mode 2 it is `i * I3 + k` and for mode 3 it is `i * I2 + j`.
//!
//! Mode products use the convention `(T x_n M)` with `M` of shape
//! `(J, I_n)`: the result replaces mode n's size with `J` and equals
//! `fold(M * unfold(T, n))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One of the three tensor modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    First,
    Second,
    Third,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::First, Mode::Second, Mode::Third];

    /// Zero-based position of the mode.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Mode::First => 0,
            Mode::Second => 1,
            Mode::Third => 2,
        }
    }

    /// One-based mode number as used in reports and checkpoints.
    pub fn number(self) -> usize {
        self.index() + 1
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    /// Accepts the one-based mode numbers 1, 2 and 3.
    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::First),
            2 => Ok(Mode::Second),
            3 => Ok(Mode::Third),
            other => Err(Error::invalid(format!("mode must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "tensor {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sub(&self, rhs: &Tensor3) -> Result<Tensor3> {
        if self.dims != rhs.dims {
            return Err(Error::invalid(format!(
                "tensor shape mismatch: {:?} vs {:?}",
                self.dims, rhs.dims
            )));
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

/// `a ∘ b ∘ c`, entry `(i, j, k) = a_i * b_j * c_k`.
pub fn outer_product3(a: &[f64], b: &[f64], c: &[f64]) -> Result<Tensor3> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(Error::invalid("outer product needs three nonempty vectors"));
    }
    Tensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k])
}

pub fn frobenius_norm(t: &Tensor3) -> f64 {
    t.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Column index of `(i, j, k)` in the mode-n unfolding.
#[inline]
fn unfold_column(dims: [usize; 3], mode: Mode, i: usize, j: usize, k: usize) -> usize {
    match mode {
        Mode::First => j * dims[2] + k,
        Mode::Second => i * dims[2] + k,
        Mode::Third => i * dims[1] + j,
    }
}

#[inline]
fn mode_coord(mode: Mode, i: usize, j: usize, k: usize) -> usize {
    match mode {
        Mode::First => i,
        Mode::Second => j,
        Mode::Third => k,
    }
}

pub fn unfold(t: &Tensor3, mode: Mode) -> Matrix {
    let dims = t.dims;
    let n = mode.index();
    let rows = dims[n];
    let cols = t.len() / rows;
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                m[(mode_coord(mode, i, j, k), unfold_column(dims, mode, i, j, k))] = t.get(i, j, k);
            }
        }
    }
    m
}

pub fn fold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    check_dims(dims)?;
    let n = mode.index();
    let total: usize = dims.iter().product();
    if m.rows() != dims[n] || m.cols() * m.rows() != total {
        return Err(Error::invalid(format!(
            "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
            m.rows(),
            m.cols()
        )));
    }
    Tensor3::from_fn(dims, |i, j, k| {
        m[(mode_coord(mode, i, j, k), unfold_column(dims, mode, i, j, k))]
    })
}

/// `t x_n m` where `m` has shape `(J, I_n)`.
pub fn mode_n_product(t: &Tensor3, m: &Matrix, mode: Mode) -> Result<Tensor3> {
    let n = mode.index();
    if m.cols() != t.dims[n] {
        return Err(Error::invalid(format!(
            "mode-{mode} product needs a matrix with {} columns, got {}x{}",
            t.dims[n],
            m.rows(),
            m.cols()
        )));
    }
    let mut dims = t.dims;
    dims[n] = m.rows();
    check_dims(dims)?;
    let inner = t.dims[n];
    Tensor3::from_fn(dims, |i, j, k| {
        let mut acc = 0.0;
        for x in 0..inner {
            let src = match mode {
                Mode::First => t.get(x, j, k),
                Mode::Second => t.get(i, x, k),
                Mode::Third => t.get(i, j, x),
            };
            acc += m[(mode_coord(mode, i, j, k), x)] * src;
        }
        acc
    })
}

/// Applies one matrix per mode in order 1, 2, 3.
pub fn multi_mode_product(t: &Tensor3, matrices: [&Matrix; 3]) -> Result<Tensor3> {
    let a = mode_n_product(t, matrices[0], Mode::First)?;
    let b = mode_n_product(&a, matrices[1], Mode::Second)?;
    mode_n_product(&b, matrices[2], Mode::Third)
}
