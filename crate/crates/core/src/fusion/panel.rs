use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{outer_product3, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Up,
    Down,
    Still,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Up => "up",
            Label::Down => "down",
            Label::Still => "still",
        }
    }
}

/// Up above `threshold`, Down below `-threshold`, Still otherwise
/// (both boundaries are Still).
pub fn label(p_change: f64, threshold: f64) -> Label {
    if p_change > threshold {
        Label::Up
    } else if p_change < -threshold {
        Label::Down
    } else {
        Label::Still
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockDayRecord {
    pub stock_id: String,
    pub date: NaiveDate,
    /// turnover, P/E, P/B, PCF, industry index
    pub quant: Vec<f64>,
    pub event: Vec<f64>,
    pub sentiment: Vec<f64>,
    pub close: f64,
    /// Fractional daily change, 0.025 = +2.5%.
    pub p_change: f64,
}

impl StockDayRecord {
    fn validate(&self, dims: [usize; 3]) -> Result<()> {
        let ctx = || format!("{} {}", self.stock_id, self.date);
        for (name, v, d) in [
            ("quant", &self.quant, dims[0]),
            ("event", &self.event, dims[1]),
            ("sentiment", &self.sentiment, dims[2]),
        ] {
            if v.len() != d {
                return Err(Error::invalid(format!(
                    "{}: {name} has {} features, expected {d}",
                    ctx(),
                    v.len()
                )));
            }
        }
        if !(self.close > 0.0) || !self.close.is_finite() {
            return Err(Error::invalid(format!("{}: close must be positive", ctx())));
        }
        if !(self.p_change > -1.0) || !self.p_change.is_finite() {
            return Err(Error::invalid(format!("{}: p_change must exceed -1", ctx())));
        }
        Ok(())
    }
}

/// Rank-1 fusion `quant ∘ event ∘ sentiment`.
pub fn build_tensor(rec: &StockDayRecord) -> Result<Tensor3> {
    for (name, v) in [
        ("quant", &rec.quant),
        ("event", &rec.event),
        ("sentiment", &rec.sentiment),
    ] {
        if v.is_empty() {
            return Err(Error::invalid(format!("{name} features are empty")));
        }
        if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "{} {}: {name}[{pos}] is not finite",
                rec.stock_id, rec.date
            )));
        }
    }
    outer_product3(&rec.quant, &rec.event, &rec.sentiment)
}

/// Stocks by trading days, with missing cells for suspended days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketPanel {
    stocks: Vec<String>,
    dates: Vec<NaiveDate>,
    /// Stock-major grid, `cells[s * T + t]`.
    cells: Vec<Option<StockDayRecord>>,
    dims: [usize; 3],
}

impl MarketPanel {
    /// Places each record on the grid spanned by `stocks` and `dates`.
    /// Dates must be strictly increasing and every record must fall on the
    /// grid exactly once.
    pub fn new(
        stocks: Vec<String>,
        dates: Vec<NaiveDate>,
        records: Vec<StockDayRecord>,
        dims: [usize; 3],
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("feature dims must be positive, got {dims:?}")));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("panel dates must be strictly increasing"));
        }
        let mut sorted = stocks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != stocks.len() {
            return Err(Error::invalid("duplicate stock id in panel"));
        }
        let t_len = dates.len();
        let mut cells = vec![None; stocks.len() * t_len];
        for rec in records {
            rec.validate(dims)?;
            let s = stocks
                .iter()
                .position(|id| *id == rec.stock_id)
                .ok_or_else(|| Error::invalid(format!("unknown stock {}", rec.stock_id)))?;
            let t = dates
                .binary_search(&rec.date)
                .map_err(|_| Error::invalid(format!("date {} not on the panel calendar", rec.date)))?;
            let cell = &mut cells[s * t_len + t];
            if cell.is_some() {
                return Err(Error::invalid(format!(
                    "duplicate record for {} on {}",
                    rec.stock_id, rec.date
                )));
            }
            *cell = Some(rec);
        }
        Ok(Self {
            stocks,
            dates,
            cells,
            dims,
        })
    }

    pub fn stocks(&self) -> &[String] {
        &self.stocks
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn record(&self, s: usize, t: usize) -> Option<&StockDayRecord> {
        self.cells[s * self.dates.len() + t].as_ref()
    }

    pub fn is_present(&self, s: usize, t: usize) -> bool {
        self.record(s, t).is_some()
    }

    pub fn p_change(&self, s: usize, t: usize) -> Option<f64> {
        self.record(s, t).map(|r| r.p_change)
    }

    pub fn records(&self) -> impl Iterator<Item = &StockDayRecord> {
        self.cells.iter().flatten()
    }

    pub fn missing_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn stock_index(&self, id: &str) -> Option<usize> {
        self.stocks.iter().position(|s| s == id)
    }

    /// Copy of the panel with quant vectors rescaled by `scaler`.
    pub fn with_scaled_quant(&self, scaler: &QuantScaler) -> MarketPanel {
        let mut out = self.clone();
        for rec in out.cells.iter_mut().flatten() {
            scaler.apply(&mut rec.quant);
        }
        out
    }
}

/// Per-feature z-score statistics for the quant mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl QuantScaler {
    /// Pooled statistics over every present record on the given days.
    /// Features with zero spread keep unit scale.
    pub fn fit(panel: &MarketPanel, days: impl Iterator<Item = usize> + Clone) -> Result<Self> {
        let d = panel.dims()[0];
        let mut sum = vec![0.0; d];
        let mut n = 0usize;
        for t in days.clone() {
            for s in 0..panel.num_stocks() {
                if let Some(rec) = panel.record(s, t) {
                    n += 1;
                    sum.iter_mut().zip(&rec.quant).for_each(|(a, x)| *a += x);
                }
            }
        }
        if n == 0 {
            return Err(Error::invalid("no records to fit quant normalization"));
        }
        let mean: Vec<f64> = sum.iter().map(|x| x / n as f64).collect();
        let mut sq = vec![0.0; d];
        for t in days {
            for s in 0..panel.num_stocks() {
                if let Some(rec) = panel.record(s, t) {
                    for ((a, x), m) in sq.iter_mut().zip(&rec.quant).zip(&mean) {
                        *a += (x - m) * (x - m);
                    }
                }
            }
        }
        let std = sq
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, quant: &mut [f64]) {
        for ((x, m), s) in quant.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }
}
