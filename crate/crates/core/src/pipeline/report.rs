use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Label;
use crate::metrics::{accuracy, mcc, ConfusionCounts};
use crate::smc::ModeTrace;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub accuracy: f64,
    pub mcc: f64,
    pub counts: ConfusionCounts,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub method: String,
    pub stock_id: String,
    pub target_date: NaiveDate,
    pub probability_up: f64,
    pub predicted: Label,
    pub actual: Label,
}

/// SMC loss history of one mode; `stock` is set only for per-stock
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcTraceRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stock: Option<String>,
    #[serde(flatten)]
    pub trace: ModeTrace,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassBalance {
    pub train_up: usize,
    pub train_down: usize,
    pub test_up: usize,
    pub test_down: usize,
    /// Labelled cells dropped because their input window was incomplete.
    pub skipped_windows: usize,
}

impl ClassBalance {
    pub fn train_up_fraction(&self) -> f64 {
        self.train_up as f64 / (self.train_up + self.train_down).max(1) as f64
    }

    pub fn test_up_fraction(&self) -> f64 {
        self.test_up as f64 / (self.test_up + self.test_down).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stocks: usize,
    pub days: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub dims: [usize; 3],
    pub tucker_ranks: [usize; 3],
    pub reduced_dims: [usize; 3],
    pub seed: u64,
    pub w_density: f64,
    pub z_density: f64,
    pub weighted_pairs: usize,
    pub zero_denominators: usize,
    pub insufficient_history_days: usize,
}

/// Everything a run produces. Wall-clock timings are kept out of the JSON
/// document so that it is byte-identical across seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub summary: RunSummary,
    pub class_balance: ClassBalance,
    pub methods: Vec<MethodResult>,
    pub smc_traces: Vec<SmcTraceRow>,
    pub warnings: Vec<String>,
    pub predictions: Vec<Prediction>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

fn counts_for(predictions: &[Prediction], method: &str) -> ConfusionCounts {
    ConfusionCounts::from_pairs(
        predictions
            .iter()
            .filter(|p| p.method == method)
            .map(|p| (p.predicted == Label::Up, p.actual == Label::Up)),
    )
}

/// Recounts every method from the prediction list and compares with the
/// stored metrics.
pub fn verify_report(report: &RunReport) -> Result<()> {
    for m in &report.methods {
        let counts = counts_for(&report.predictions, &m.method);
        if counts != m.counts {
            return Err(Error::invalid(format!(
                "{}: stored counts {:?} differ from recount {:?}",
                m.method, m.counts, counts
            )));
        }
        let (acc, mc) = (accuracy(&counts)?, mcc(&counts)?);
        if acc != m.accuracy || mc != m.mcc {
            return Err(Error::invalid(format!("{}: stored ACC/MCC differ from recount", m.method)));
        }
    }
    Ok(())
}

/// The aligned `Method | ACC | MCC` table.
pub fn render_table(report: &RunReport) -> String {
    let width = report.methods.iter().map(|m| m.method.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}", "Method", "ACC", "MCC");
    let _ = writeln!(out, "{}", "-".repeat(width + 18));
    for m in &report.methods {
        let _ = writeln!(out, "{:<width$}  {:>7.4}  {:>7.4}", m.method, m.accuracy, m.mcc);
    }
    out
}

fn render_text(report: &RunReport) -> String {
    let s = &report.summary;
    let b = &report.class_balance;
    let mut out = render_table(report);
    let _ = writeln!(out);
    let _ = writeln!(out, "stocks {}  days {}", s.stocks, s.days);
    let _ = writeln!(out, "train {} .. {}  test {} .. {}", s.train_start, s.train_end, s.test_start, s.test_end);
    let _ = writeln!(
        out,
        "samples train {} (up {:.3})  test {} (up {:.3})  skipped windows {}",
        b.train_up + b.train_down,
        b.train_up_fraction(),
        b.test_up + b.test_down,
        b.test_up_fraction(),
        b.skipped_windows
    );
    let _ = writeln!(
        out,
        "W density {:.4}  Z density {:.4}  weighted pairs {}",
        s.w_density, s.z_density, s.weighted_pairs
    );
    for row in &report.smc_traces {
        let t = &row.trace;
        let who = row.stock.as_deref().map(|s| format!("{s} ")).unwrap_or_default();
        let _ = writeln!(
            out,
            "SMC {who}mode {}: loss {:.6e} -> {:.6e} in {} iterations{}",
            t.mode,
            t.initial_loss(),
            t.final_loss(),
            t.iterations,
            if t.converged { " (converged)" } else { "" }
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    if !report.timings.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "wall-clock seconds");
        for (stage, secs) in &report.timings {
            let _ = writeln!(out, "  {stage:<12} {secs:>8.3}");
        }
    }
    out
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes `report.txt`, `report.json` and `smc_loss_mode{k}.csv` into
/// `dir`.
pub fn report_emit(report: &RunReport, dir: &Path) -> Result<()> {
    if report.predictions.is_empty() {
        return Err(Error::invalid("report has no predictions"));
    }
    verify_report(report)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.txt"), &render_text(report))?;
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Format {
        path: dir.join("report.json"),
        message: e.to_string(),
    })?;
    json.push('\n');
    write(&dir.join("report.json"), &json)?;
    for row in &report.smc_traces {
        let t = &row.trace;
        let mut csv = String::from("iteration,loss\n");
        for (i, l) in t.losses.iter().enumerate() {
            let _ = writeln!(csv, "{i},{l}");
        }
        let name = match &row.stock {
            Some(s) => format!("smc_loss_{s}_mode{}.csv", t.mode),
            None => format!("smc_loss_mode{}.csv", t.mode),
        };
        write(&dir.join(name), &csv)?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if report.report_version != REPORT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unsupported report_version {}", report.report_version),
        });
    }
    Ok(report)
}

/// Builds a method row from its predictions.
pub fn method_result(
    method: &str,
    predictions: &[Prediction],
    train_samples: usize,
    loss_trace: Vec<f64>,
) -> Result<MethodResult> {
    let counts = counts_for(predictions, method);
    Ok(MethodResult {
        method: method.to_string(),
        accuracy: accuracy(&counts)?,
        mcc: mcc(&counts)?,
        counts,
        train_samples,
        test_samples: counts.total() as usize,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(method: &str, predicted: Label, actual: Label) -> Prediction {
        Prediction {
            method: method.into(),
            stock_id: "S000".into(),
            target_date: NaiveDate::from_ymd_opt(2015, 10, 1).unwrap(),
            probability_up: if predicted == Label::Up { 0.8 } else { 0.2 },
            predicted,
            actual,
        }
    }

    fn sample_report() -> RunReport {
        use Label::{Down, Up};
        let predictions = vec![
            pred("A", Up, Up),
            pred("A", Up, Down),
            pred("A", Down, Down),
            pred("B", Down, Up),
        ];
        let methods = vec![
            method_result("A", &predictions, 10, vec![0.7, 0.6]).unwrap(),
            method_result("B", &predictions, 10, vec![0.7]).unwrap(),
        ];
        let d = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
        RunReport {
            report_version: REPORT_VERSION,
            summary: RunSummary {
                stocks: 1,
                days: 2,
                train_start: d,
                train_end: d,
                test_start: d,
                test_end: d,
                dims: [5, 8, 4],
                tucker_ranks: [3, 4, 2],
                reduced_dims: [3, 4, 2],
                seed: 1,
                w_density: 0.5,
                z_density: 0.0,
                weighted_pairs: 3,
                zero_denominators: 0,
                insufficient_history_days: 0,
            },
            class_balance: ClassBalance::default(),
            methods,
            smc_traces: Vec::new(),
            warnings: Vec::new(),
            predictions,
            timings: vec![("ingest".into(), 0.5)],
        }
    }

    #[test]
    fn table_matches_recomputed_metrics() {
        let r = sample_report();
        assert!((r.methods[0].accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.methods[1].accuracy, 0.0);
        let table = render_table(&r);
        assert!(table.lines().any(|l| l.starts_with("A ") && l.contains("0.6667") && l.ends_with("0.5000")), "{table}");
        verify_report(&r).unwrap();
    }

    #[test]
    fn tampered_metrics_fail_verification() {
        let mut r = sample_report();
        r.methods[0].accuracy = 0.9;
        assert!(verify_report(&r).is_err());
    }

    #[test]
    fn emit_is_byte_stable_and_json_round_trips() {
        let r = sample_report();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        report_emit(&r, a.path()).unwrap();
        let mut later = r.clone();
        later.timings = vec![("ingest".into(), 9.0)];
        report_emit(&later, b.path()).unwrap();
        let ja = std::fs::read(a.path().join("report.json")).unwrap();
        assert_eq!(ja, std::fs::read(b.path().join("report.json")).unwrap());
        let back = load_report(&a.path().join("report.json")).unwrap();
        assert_eq!(RunReport { timings: Vec::new(), ..r }, back);
    }

    #[test]
    fn empty_predictions_are_an_error() {
        let mut r = sample_report();
        r.predictions.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(report_emit(&r, dir.path()).is_err());
    }
}
