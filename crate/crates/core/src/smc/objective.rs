use super::DecomposedPanel;
use crate::error::{Error, Result};
use crate::fusion::SimilarityWeights;
use crate::linalg::Matrix;
use crate::tensor::Mode;

/// The mode-k alignment objective over one decomposed panel.
#[derive(Debug, Clone, Copy)]
pub struct SmcObjective<'a> {
    panel: &'a DecomposedPanel,
    weights: &'a SimilarityWeights,
    mode: Mode,
    cross_stock_weight: f64,
}

impl<'a> SmcObjective<'a> {
    pub fn new(
        panel: &'a DecomposedPanel,
        weights: &'a SimilarityWeights,
        mode: Mode,
        cross_stock_weight: f64,
    ) -> Result<Self> {
        let (s_len, t_len) = (panel.num_stocks(), panel.num_days());
        if weights.w.len() != s_len || weights.w.iter().any(|w| w.size() != t_len) {
            return Err(Error::invalid(format!(
                "W needs {s_len} matrices of size {t_len} to match the panel"
            )));
        }
        if weights.z.len() != t_len || weights.z.iter().any(|z| z.size() != s_len) {
            return Err(Error::invalid(format!(
                "Z needs {t_len} matrices of size {s_len} to match the panel"
            )));
        }
        Ok(Self {
            panel,
            weights,
            mode,
            cross_stock_weight,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.panel.dims()[self.mode.index()]
    }

    /// Visits weighted pairs `(U_a, U_b, weight)` in a fixed order: all
    /// within-stock pairs stock by stock, then cross-stock pairs day by day.
    /// With `only_stock`, keeps the pairs that involve that stock.
    fn for_each_pair(&self, only_stock: Option<usize>, mut f: impl FnMut(&Matrix, &Matrix, f64)) {
        let k = self.mode.index();
        for (s, w) in self.weights.w.iter().enumerate() {
            if only_stock.is_some_and(|x| x != s) {
                continue;
            }
            for (i, j) in w.pairs() {
                if let (Some(a), Some(b)) = (self.panel.factors(s, i), self.panel.factors(s, j)) {
                    f(&a.factors[k], &b.factors[k], 1.0);
                }
            }
        }
        if self.cross_stock_weight == 0.0 {
            return;
        }
        for (t, z) in self.weights.z.iter().enumerate() {
            for (s, m) in z.pairs() {
                if only_stock.is_some_and(|x| x != s && x != m) {
                    continue;
                }
                if let (Some(a), Some(b)) = (self.panel.factors(m, t), self.panel.factors(s, t)) {
                    f(&a.factors[k], &b.factors[k], self.cross_stock_weight);
                }
            }
        }
    }

    fn check_v(&self, v: &Matrix) -> Result<()> {
        if v.rows() != self.input_dim() {
            return Err(Error::invalid(format!(
                "V_{} has {} rows, expected {}",
                self.mode,
                v.rows(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Loss summed pair by pair.
    pub fn loss(&self, v: &Matrix) -> Result<f64> {
        self.check_v(v)?;
        let mut total = 0.0;
        let mut err = None;
        self.for_each_pair(None, |a, b, weight| {
            let diff = match a.sub(b).and_then(|d| v.t_matmul(&d)) {
                Ok(d) => d,
                Err(e) => {
                    err.get_or_insert(e);
                    return;
                }
            };
            total += weight * diff.as_slice().iter().map(|x| x * x).sum::<f64>();
        });
        err.map_or(Ok(total), Err)
    }

    /// `2 sum weight ΔU ΔU^T V`, summed pair by pair.
    pub fn gradient(&self, v: &Matrix) -> Result<Matrix> {
        self.check_v(v)?;
        let mut grad = Matrix::zeros(v.rows(), v.cols());
        let mut err = None;
        self.for_each_pair(None, |a, b, weight| {
            let step = a
                .sub(b)
                .and_then(|d| v.t_matmul(&d).and_then(|proj| d.matmul(&proj.transpose())))
                .and_then(|g| grad.add(&g.scale(2.0 * weight)));
            match step {
                Ok(g) => grad = g,
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        });
        err.map_or(Ok(grad), Err)
    }

    /// Pair scatter `S = sum weight ΔU ΔU^T` (an `I_k x I_k` PSD matrix),
    /// optionally limited to the pairs involving one stock.
    pub fn scatter(&self, only_stock: Option<usize>) -> Matrix {
        let n = self.input_dim();
        let mut s = Matrix::zeros(n, n);
        self.for_each_pair(only_stock, |a, b, weight| {
            let d = a.sub(b).expect("factors share a shape");
            let outer = d.matmul(&d.transpose()).expect("square");
            for (x, y) in s.as_mut_slice().iter_mut().zip(outer.as_slice()) {
                *x += weight * y;
            }
        });
        s
    }

    pub fn pair_count(&self) -> usize {
        let mut n = 0;
        self.for_each_pair(None, |_, _, _| n += 1);
        n
    }
}

/// `tr(V^T S V)`.
pub(crate) fn scatter_loss(scatter: &Matrix, v: &Matrix) -> f64 {
    let sv = scatter.matmul(v).expect("scatter matches V");
    v.as_slice().iter().zip(sv.as_slice()).map(|(a, b)| a * b).sum()
}

/// `2 S V`.
pub(crate) fn scatter_gradient(scatter: &Matrix, v: &Matrix) -> Matrix {
    scatter.matmul(v).expect("scatter matches V").scale(2.0)
}

/// Mode-k objective with unit cross-stock weight, evaluated pair by pair.
pub fn smc_loss(v: &Matrix, panel: &DecomposedPanel, weights: &SimilarityWeights, mode: Mode) -> Result<f64> {
    SmcObjective::new(panel, weights, mode, 1.0)?.loss(v)
}

/// Analytic gradient of [`smc_loss`] with respect to `V_k`.
pub fn smc_gradient(v: &Matrix, panel: &DecomposedPanel, weights: &SimilarityWeights, mode: Mode) -> Result<Matrix> {
    SmcObjective::new(panel, weights, mode, 1.0)?.gradient(v)
}
