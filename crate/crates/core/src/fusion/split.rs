use std::ops::Range;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::panel::{label, Label, MarketPanel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSplit {
    pub train_days: Range<usize>,
    pub test_days: Range<usize>,
    /// (stock, day) cells with a present record and an Up/Down label.
    pub train_samples: Vec<(usize, usize)>,
    pub test_samples: Vec<(usize, usize)>,
}

/// Chronological split on calendar-month boundaries: the first
/// `train_months` months train, the next `test_months` months test and
/// anything later is unused.
pub fn split_panel(panel: &MarketPanel, train_months: usize, test_months: usize, threshold: f64) -> Result<PanelSplit> {
    if train_months == 0 || test_months == 0 {
        return Err(Error::invalid("train and test month counts must be positive"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid("movement threshold must be positive"));
    }
    // Index of the first day of every calendar month in the panel.
    let mut month_starts = Vec::new();
    let mut prev = None;
    for (t, d) in panel.dates().iter().enumerate() {
        let key = (d.year(), d.month());
        if prev != Some(key) {
            month_starts.push(t);
            prev = Some(key);
        }
    }
    let needed = train_months + test_months;
    if month_starts.len() < needed {
        return Err(Error::invalid(format!(
            "panel spans {} calendar months, split needs {needed}",
            month_starts.len()
        )));
    }
    let boundary = month_starts[train_months];
    let end = month_starts.get(needed).copied().unwrap_or(panel.num_days());
    let train_days = 0..boundary;
    let test_days = boundary..end;
    let collect = |days: &Range<usize>| {
        let mut out = Vec::new();
        for s in 0..panel.num_stocks() {
            for t in days.clone() {
                if let Some(r) = panel.record(s, t) {
                    if label(r.p_change, threshold) != Label::Still {
                        out.push((s, t));
                    }
                }
            }
        }
        out
    };
    Ok(PanelSplit {
        train_samples: collect(&train_days),
        test_samples: collect(&test_days),
        train_days,
        test_days,
    })
}
