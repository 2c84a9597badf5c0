use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::RunConfig;
use super::report::{
    method_result, report_emit, ClassBalance, Prediction, RunReport, RunSummary, SmcTraceRow, REPORT_VERSION,
};
use crate::error::{Error, Result};
use crate::fusion::{build_tensor, label, read_panel, split_panel, Label, MarketPanel, QuantScaler, SimilarityWeights};
use crate::predictor::{
    logistic_baseline, predict, save_lstm, train_lstm, FeatureScaler, SequenceClassifier, SequenceSample,
};
use crate::smc::{
    reduce_tensor, save_checkpoint, train_smc, train_smc_per_stock, DecomposedPanel, ModificationMatrices,
    SmcCheckpoint, SmcTraining,
};
use crate::tucker::{hooi, TuckerConfig, TuckerFactors};

pub const METHOD_LOGISTIC_RAW: &str = "Logistic (raw)";
pub const METHOD_SMC_LOGISTIC: &str = "SMC+Logistic";
pub const METHOD_SMC_LSTM: &str = "SMC+LSTM";
pub const METHOD_CORE_LSTM: &str = "Core+LSTM";

/// Per-cell feature vectors on the stock-major grid.
type FeatureGrid = Vec<Option<Vec<f64>>>;

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

struct Timer {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Timer {
    fn new() -> Self {
        Self { start: Instant::now(), laps: Vec::new() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps.push((name.to_string(), (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

/// Every labelled cell in `cells` whose previous `window` days are all
/// present becomes a sample; the rest are counted as skipped.
fn assemble(
    panel: &MarketPanel,
    cells: &[(usize, usize)],
    grid: &FeatureGrid,
    window: usize,
    threshold: f64,
) -> (Vec<SequenceSample>, usize) {
    let t_len = panel.num_days();
    let mut out = Vec::with_capacity(cells.len());
    let mut skipped = 0;
    for &(s, t) in cells {
        if t < window {
            skipped += 1;
            continue;
        }
        let inputs: Option<Vec<Vec<f64>>> = (t - window..t).map(|u| grid[s * t_len + u].clone()).collect();
        let (Some(inputs), Some(rec)) = (inputs, panel.record(s, t)) else {
            skipped += 1;
            continue;
        };
        out.push(SequenceSample {
            stock_id: rec.stock_id.clone(),
            target_date: rec.date,
            input_dates: panel.dates()[t - window..t].to_vec(),
            inputs,
            target: label(rec.p_change, threshold),
        });
    }
    (out, skipped)
}

/// Fails if any sample sees its own day or later, or has a Still target.
pub fn audit_samples(samples: &[SequenceSample]) -> Result<()> {
    for s in samples {
        if s.input_dates.len() != s.inputs.len() || s.inputs.is_empty() {
            return Err(Error::invalid(format!(
                "{} {}: input dates do not match inputs",
                s.stock_id, s.target_date
            )));
        }
        if s.input_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("{} {}: inputs out of order", s.stock_id, s.target_date)));
        }
        if let Some(d) = s.input_dates.iter().find(|d| **d >= s.target_date) {
            return Err(Error::invalid(format!(
                "look-ahead: {} sample for {} uses {d}",
                s.stock_id, s.target_date
            )));
        }
        if s.target == Label::Still {
            return Err(Error::invalid(format!("{} {}: Still target", s.stock_id, s.target_date)));
        }
    }
    Ok(())
}

fn evaluate<M: SequenceClassifier>(model: &M, method: &str, test: &[SequenceSample]) -> Result<Vec<Prediction>> {
    test.iter()
        .map(|s| {
            let p = model.probability_up(s)?;
            Ok(Prediction {
                method: method.to_string(),
                stock_id: s.stock_id.clone(),
                target_date: s.target_date,
                probability_up: p,
                predicted: predict(p, 0.5),
                actual: s.target,
            })
        })
        .collect()
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Representations {
    raw: FeatureGrid,
    reduced: FeatureGrid,
    core: FeatureGrid,
}

/// Runs the whole experiment described by `cfg` and writes its artifacts
/// into `cfg.out_dir`. Artifacts of completed stages stay on disk when a
/// later stage fails.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    stage("config", || cfg.validate())?;
    let out = cfg.out_dir.as_path();
    stage("output", || std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)))?;
    let mut timer = Timer::new();
    let mut warnings = Vec::new();

    let (panel, ingest) = stage("ingest", || read_panel(&cfg.panel_paths(), cfg.dims, cfg.allow_missing))?;
    if ingest.rows_rejected > 0 || ingest.partial_cells > 0 {
        warnings.push(format!(
            "ingest skipped {} rows and {} partial cells",
            ingest.rows_rejected, ingest.partial_cells
        ));
    }
    timer.lap("ingest");

    let split = stage("split", || split_panel(&panel, cfg.train_months, cfg.test_months, cfg.threshold))?;
    let scaler = stage("normalize", || QuantScaler::fit(&panel, split.train_days.clone()))?;
    let panel = panel.with_scaled_quant(&scaler);
    let (s_len, t_len) = (panel.num_stocks(), panel.num_days());

    let tucker_cfg = TuckerConfig {
        ranks: cfg.tucker_ranks,
        hooi_max_iters: cfg.hooi_max_iters,
        hooi_tol: cfg.hooi_tol,
    };
    let factors: Vec<Option<TuckerFactors>> = stage("tucker", || {
        (0..s_len * t_len)
            .into_par_iter()
            .map(|i| {
                panel
                    .record(i / t_len, i % t_len)
                    .map(|r| build_tensor(r).and_then(|t| hooi(&t, &tucker_cfg)))
                    .transpose()
            })
            .collect()
    })?;
    timer.lap("tucker");

    let train_len = split.train_days.end;
    let weights = stage("similarity", || {
        SimilarityWeights::build(&panel, split.train_days.clone(), cfg.eps1, cfg.eps2, cfg.corr_window)
    })?;
    if weights.zero_denominators > 0 {
        warnings.push(format!("{} W pairs had a zero p_change denominator", weights.zero_denominators));
    }
    timer.lap("similarity");

    let smc_cfg = cfg.smc_config();
    let (per_stock_v, trainings): (Vec<ModificationMatrices>, Vec<(Option<String>, SmcTraining)>) =
        stage("smc", || {
            let train_cells: Vec<Option<TuckerFactors>> = (0..s_len)
                .flat_map(|s| factors[s * t_len..s * t_len + train_len].iter().cloned())
                .collect();
            let decomposed = DecomposedPanel::new(s_len, train_len, train_cells)?;
            if smc_cfg.per_stock {
                let runs = train_smc_per_stock(&decomposed, &weights, &smc_cfg)?;
                let vs = runs.iter().map(|r| r.matrices.clone()).collect();
                let named = panel.stocks().iter().cloned().map(Some).zip(runs).collect();
                Ok((vs, named))
            } else {
                let run = train_smc(&decomposed, &weights, &smc_cfg)?;
                Ok((vec![run.matrices.clone(); s_len], vec![(None, run)]))
            }
        })?;
    for (who, t) in &trainings {
        for w in &t.warnings {
            warnings.push(match who {
                Some(s) => format!("SMC {s}: {w}"),
                None => format!("SMC: {w}"),
            });
        }
    }
    stage("smc", || {
        let refs: Vec<(Option<String>, &SmcTraining)> = trainings.iter().map(|(s, t)| (s.clone(), t)).collect();
        save_checkpoint(&SmcCheckpoint::from_training(&smc_cfg, &refs), &out.join("smc_checkpoint.json"))
    })?;
    timer.lap("smc");

    let reps = stage("reduce", || {
        let reduced = (0..s_len * t_len)
            .into_par_iter()
            .map(|i| {
                factors[i]
                    .as_ref()
                    .map(|f| reduce_tensor(f, &per_stock_v[i / t_len]).map(|t| t.into_vec()))
                    .transpose()
            })
            .collect::<Result<FeatureGrid>>()?;
        let core = factors.iter().map(|f| f.as_ref().map(|f| f.core.as_slice().to_vec())).collect();
        let raw = (0..s_len * t_len)
            .map(|i| {
                panel.record(i / t_len, i % t_len).map(|r| {
                    let mut v = r.quant.clone();
                    v.extend_from_slice(&r.event);
                    v.extend_from_slice(&r.sentiment);
                    v
                })
            })
            .collect();
        Ok(Representations { raw, reduced, core })
    })?;
    timer.lap("reduce");

    let pcfg = cfg.predictor_config();
    let build = |grid: &FeatureGrid| -> Result<(Vec<SequenceSample>, Vec<SequenceSample>, usize)> {
        let (train, a) = assemble(&panel, &split.train_samples, grid, pcfg.window, cfg.threshold);
        let (test, b) = assemble(&panel, &split.test_samples, grid, pcfg.window, cfg.threshold);
        audit_samples(&train)?;
        audit_samples(&test)?;
        if let (Some(last_train), Some(first_test)) = (train.iter().map(|s| s.target_date).max(), test.first()) {
            if test.iter().any(|s| s.target_date <= last_train) {
                return Err(Error::invalid(format!(
                    "test target {} does not follow the training period",
                    first_test.target_date
                )));
            }
        }
        if test.is_empty() {
            return Err(Error::invalid("no test samples"));
        }
        let scaler = FeatureScaler::fit(&train)?;
        Ok((scaler.transform(&train), scaler.transform(&test), a + b))
    };
    let (raw_train, raw_test, skipped) = stage("samples", || build(&reps.raw))?;
    let (red_train, red_test, _) = stage("samples", || build(&reps.reduced))?;
    let (core_train, core_test, _) = stage("samples", || build(&reps.core))?;
    timer.lap("samples");

    let mut predictions = Vec::new();
    let mut methods = Vec::new();
    let mut record = |name: &str, preds: Vec<Prediction>, n_train: usize, trace: Vec<f64>| -> Result<()> {
        methods.push(method_result(name, &preds, n_train, trace)?);
        predictions.extend(preds);
        Ok(())
    };

    stage("logistic", || {
        for (name, train, test, file) in [
            (METHOD_LOGISTIC_RAW, &raw_train, &raw_test, "logistic_raw.json"),
            (METHOD_SMC_LOGISTIC, &red_train, &red_test, "logistic_smc.json"),
        ] {
            let fit = logistic_baseline(train, &pcfg)?;
            write_json(&fit.model, &out.join(file))?;
            record(name, evaluate(&fit.model, name, test)?, train.len(), fit.loss_trace)?;
        }
        Ok(())
    })?;
    timer.lap("logistic");

    stage("lstm", || {
        for (name, train, test, file) in [
            (METHOD_SMC_LSTM, &red_train, &red_test, "lstm_smc.json"),
            (METHOD_CORE_LSTM, &core_train, &core_test, "lstm_core.json"),
        ] {
            let (params, trace) = train_lstm(train, &pcfg)?;
            save_lstm(&params, &out.join(file))?;
            record(name, evaluate(&params, name, test)?, train.len(), trace)?;
        }
        Ok(())
    })?;
    timer.lap("lstm");

    let count = |samples: &[SequenceSample], up: bool| samples.iter().filter(|s| s.is_up() == up).count();
    let dates = panel.dates();
    let mut report = RunReport {
        report_version: REPORT_VERSION,
        summary: RunSummary {
            stocks: s_len,
            days: t_len,
            train_start: dates[split.train_days.start],
            train_end: dates[split.train_days.end - 1],
            test_start: dates[split.test_days.start],
            test_end: dates[split.test_days.end - 1],
            dims: cfg.dims,
            tucker_ranks: cfg.tucker_ranks,
            reduced_dims: smc_cfg.reduced_dims,
            seed: cfg.seed,
            w_density: weights.w_density(),
            z_density: weights.z_density(),
            weighted_pairs: weights.total_pairs(),
            zero_denominators: weights.zero_denominators,
            insufficient_history_days: weights.insufficient_history_days,
        },
        class_balance: ClassBalance {
            train_up: count(&raw_train, true),
            train_down: count(&raw_train, false),
            test_up: count(&raw_test, true),
            test_down: count(&raw_test, false),
            skipped_windows: skipped,
        },
        methods,
        smc_traces: trainings
            .iter()
            .flat_map(|(who, t)| t.traces.iter().map(|tr| SmcTraceRow { stock: who.clone(), trace: tr.clone() }))
            .collect(),
        warnings,
        predictions,
        timings: Vec::new(),
    };
    timer.lap("report");
    report.timings = timer.laps;
    stage("report", || report_emit(&report, out))?;
    Ok(report)
}
