//! Binary similarity weights: `W_s` pairs days of one stock whose p-change
//! values are relatively close, `Z_t` pairs stocks whose trailing p-change
//! series are correlated on day t.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::panel::MarketPanel;
use crate::error::{Error, Result};

/// Square 0/1 matrix whose ones lie strictly above the diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryUpper {
    n: usize,
    bits: Vec<bool>,
}

impl BinaryUpper {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Marks pair `(i, j)`; only `i < j` is accepted.
    pub fn set(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= j || j >= self.n {
            return Err(Error::invalid(format!(
                "pair ({i}, {j}) is not strictly upper-triangular in a {n}x{n} matrix",
                n = self.n
            )));
        }
        self.bits[i * self.n + j] = true;
        Ok(())
    }

    /// Ones in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| (idx / n, idx % n))
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of the `n(n-1)/2` strictly upper entries that are one.
    pub fn density(&self) -> f64 {
        let slots = self.n * self.n.saturating_sub(1) / 2;
        if slots == 0 {
            0.0
        } else {
            self.ones() as f64 / slots as f64
        }
    }
}

/// `W_s` over every day of the panel. See [`build_w_in`].
pub fn build_w(panel: &MarketPanel, s: usize, eps1: f64) -> Result<(BinaryUpper, usize)> {
    build_w_in(panel, s, eps1, 0..panel.num_days())
}

/// `W_s` restricted to `days`, indexed relative to `days.start`.
///
/// `w_ij = 1` iff `i < j`, both days are present and
/// `|y_i - y_j| / |y_j| <= eps1`. A zero `y_j` leaves the pair at 0; the
/// number of such pairs is returned alongside the matrix.
pub fn build_w_in(panel: &MarketPanel, s: usize, eps1: f64, days: Range<usize>) -> Result<(BinaryUpper, usize)> {
    if s >= panel.num_stocks() {
        return Err(Error::invalid(format!("stock index {s} out of range")));
    }
    if days.end > panel.num_days() || days.start > days.end {
        return Err(Error::invalid(format!("day range {days:?} outside the panel")));
    }
    let y: Vec<Option<f64>> = days.clone().map(|t| panel.p_change(s, t)).collect();
    let mut w = BinaryUpper::zeros(y.len());
    let mut zero_denominators = 0;
    for j in 0..y.len() {
        let Some(yj) = y[j] else { continue };
        for i in 0..j {
            let Some(yi) = y[i] else { continue };
            if yj == 0.0 {
                zero_denominators += 1;
                continue;
            }
            if (yi - yj).abs() / yj.abs() <= eps1 {
                w.set(i, j)?;
            }
        }
    }
    Ok((w, zero_denominators))
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZOutcome {
    pub matrix: BinaryUpper,
    /// Fewer than `corr_window` days of history: the matrix is all zero.
    pub insufficient_history: bool,
}

/// `Z_t`: `z_sm = 1` iff `s < m` and the Pearson correlation of the two
/// stocks' p-change over the `corr_window` days ending at `t` is at least
/// `eps2`. Pairs with a missing day in the window or a flat series get 0.
pub fn build_z(panel: &MarketPanel, t: usize, eps2: f64, corr_window: usize) -> Result<ZOutcome> {
    if t >= panel.num_days() {
        return Err(Error::invalid(format!("day index {t} out of range")));
    }
    if corr_window < 2 {
        return Err(Error::invalid("corr_window must be at least 2"));
    }
    let n = panel.num_stocks();
    let mut z = BinaryUpper::zeros(n);
    if t + 1 < corr_window {
        return Ok(ZOutcome {
            matrix: z,
            insufficient_history: true,
        });
    }
    let window = (t + 1 - corr_window)..(t + 1);
    let series: Vec<Option<Vec<f64>>> = (0..n)
        .map(|s| window.clone().map(|d| panel.p_change(s, d)).collect())
        .collect();
    for s in 0..n {
        let Some(xs) = &series[s] else { continue };
        for m in (s + 1)..n {
            let Some(ys) = &series[m] else { continue };
            if pearson(xs, ys).is_some_and(|r| r >= eps2) {
                z.set(s, m)?;
            }
        }
    }
    Ok(ZOutcome {
        matrix: z,
        insufficient_history: false,
    })
}

/// Per-stock `W_s` and per-day `Z_t` over a contiguous block of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    /// One matrix per stock over the block's days.
    pub w: Vec<BinaryUpper>,
    /// One matrix per day of the block.
    pub z: Vec<BinaryUpper>,
    pub eps1: f64,
    pub eps2: f64,
    pub corr_window: usize,
    pub zero_denominators: usize,
    pub insufficient_history_days: usize,
}

impl SimilarityWeights {
    /// Weights for `days`. `Z_t` looks back over the whole panel, so
    /// history before `days.start` is used but nothing after day t.
    pub fn build(panel: &MarketPanel, days: Range<usize>, eps1: f64, eps2: f64, corr_window: usize) -> Result<Self> {
        if !(eps1 > 0.0 && eps1 < 1.0) {
            return Err(Error::invalid(format!("eps1 must lie in (0, 1), got {eps1}")));
        }
        if !(eps2 > -1.0 && eps2 <= 1.0) {
            return Err(Error::invalid(format!("eps2 must lie in (-1, 1], got {eps2}")));
        }
        let mut w = Vec::with_capacity(panel.num_stocks());
        let mut zero_denominators = 0;
        for s in 0..panel.num_stocks() {
            let (m, zeros) = build_w_in(panel, s, eps1, days.clone())?;
            zero_denominators += zeros;
            w.push(m);
        }
        let mut z = Vec::with_capacity(days.len());
        let mut insufficient_history_days = 0;
        for t in days {
            let out = build_z(panel, t, eps2, corr_window)?;
            insufficient_history_days += usize::from(out.insufficient_history);
            z.push(out.matrix);
        }
        Ok(Self {
            w,
            z,
            eps1,
            eps2,
            corr_window,
            zero_denominators,
            insufficient_history_days,
        })
    }

    /// Weights for an arbitrary instance, mainly for constructed tests.
    pub fn from_matrices(w: Vec<BinaryUpper>, z: Vec<BinaryUpper>) -> Self {
        Self {
            w,
            z,
            eps1: f64::NAN,
            eps2: f64::NAN,
            corr_window: 0,
            zero_denominators: 0,
            insufficient_history_days: 0,
        }
    }

    pub fn w_density(&self) -> f64 {
        pooled_density(&self.w)
    }

    pub fn z_density(&self) -> f64 {
        pooled_density(&self.z)
    }

    pub fn total_pairs(&self) -> usize {
        self.w.iter().chain(&self.z).map(BinaryUpper::ones).sum()
    }
}

fn pooled_density(ms: &[BinaryUpper]) -> f64 {
    let ones: usize = ms.iter().map(BinaryUpper::ones).sum();
    let slots: usize = ms.iter().map(|m| m.size() * m.size().saturating_sub(1) / 2).sum();
    if slots == 0 {
        0.0
    } else {
        ones as f64 / slots as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::StockDayRecord;
    use chrono::{Days, NaiveDate};

    fn panel_from_series(series: &[&[Option<f64>]]) -> MarketPanel {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        let days = series[0].len();
        let dates: Vec<_> = (0..days).map(|d| start + Days::new(d as u64)).collect();
        let stocks: Vec<String> = (0..series.len()).map(|s| format!("S{s}")).collect();
        let mut records = Vec::new();
        for (s, ys) in series.iter().enumerate() {
            for (t, y) in ys.iter().enumerate() {
                if let Some(y) = y {
                    records.push(StockDayRecord {
                        stock_id: stocks[s].clone(),
                        date: dates[t],
                        quant: vec![1.0],
                        event: vec![1.0],
                        sentiment: vec![1.0],
                        close: 1.0,
                        p_change: *y,
                    });
                }
            }
        }
        MarketPanel::new(stocks, dates, records, [1, 1, 1]).unwrap()
    }

    #[test]
    fn w_formula_examples() {
        let p = panel_from_series(&[&[Some(0.030), Some(0.029), Some(0.05), Some(0.01)]]);
        let (w, zeros) = build_w(&p, 0, 0.05).unwrap();
        assert_eq!(zeros, 0);
        // |0.030 - 0.029| / 0.029 ≈ 0.0345 <= 0.05
        assert!(w.get(0, 1));
        assert!(!w.get(1, 0));
        for i in 0..4 {
            assert!(!w.get(i, i));
        }
        let (w, _) = build_w(&p, 0, 0.5).unwrap();
        // |0.05 - 0.01| / 0.01 = 4 > 0.5
        assert!(!w.get(2, 3));
    }

    #[test]
    fn w_zero_denominator_and_missing_days() {
        let p = panel_from_series(&[&[Some(0.0), Some(0.0), None, Some(0.01)]]);
        let (w, zeros) = build_w(&p, 0, 0.5).unwrap();
        assert_eq!(zeros, 1);
        assert_eq!(w.ones(), 0);
    }

    #[test]
    fn z_examples() {
        let up = [Some(0.01), Some(0.02), Some(0.03)];
        let down = [Some(0.03), Some(0.02), Some(0.01)];
        let p = panel_from_series(&[&up, &up, &down]);
        let z = build_z(&p, 2, 0.9, 3).unwrap();
        assert!(!z.insufficient_history);
        assert!(z.matrix.get(0, 1));
        assert!(!z.matrix.get(0, 0));
        let z0 = build_z(&p, 2, 0.0, 3).unwrap();
        assert!(!z0.matrix.get(0, 2));
        assert!(!z0.matrix.get(1, 2));
        let early = build_z(&p, 1, 0.0, 3).unwrap();
        assert!(early.insufficient_history);
        assert_eq!(early.matrix.ones(), 0);
    }

    #[test]
    fn z_flat_series_is_zero() {
        let flat = [Some(0.01); 3];
        let up = [Some(0.01), Some(0.02), Some(0.03)];
        let p = panel_from_series(&[&flat, &up]);
        assert_eq!(build_z(&p, 2, -0.5, 3).unwrap().matrix.ones(), 0);
    }

    #[test]
    fn pearson_hand_values() {
        assert!((pearson(&[0.01, 0.02, 0.03], &[0.03, 0.02, 0.01]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 4.0], &[2.0, 4.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[0.0, 2.0]).is_none());
    }

    #[test]
    fn set_rejects_lower_triangle() {
        let mut m = BinaryUpper::zeros(3);
        assert!(m.set(1, 1).is_err());
        assert!(m.set(2, 1).is_err());
        m.set(0, 2).unwrap();
        assert_eq!(m.pairs().collect::<Vec<_>>(), vec![(0, 2)]);
        assert!((m.density() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_validate_thresholds() {
        let p = panel_from_series(&[&[Some(0.01), Some(0.02)]]);
        assert!(SimilarityWeights::build(&p, 0..2, 0.0, 0.5, 2).is_err());
        assert!(SimilarityWeights::build(&p, 0..2, 0.1, -1.0, 2).is_err());
        let w = SimilarityWeights::build(&p, 0..2, 0.5, 0.5, 2).unwrap();
        assert_eq!(w.z.len(), 2);
        assert_eq!(w.insufficient_history_days, 1);
    }
}
