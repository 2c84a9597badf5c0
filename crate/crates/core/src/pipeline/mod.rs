//! End-to-end orchestration: configuration, synthetic panels, the run
//! itself and its reports.

mod config;
mod report;
mod run;
mod synth;

pub use config::RunConfig;
pub use report::{
    load_report, method_result, render_table, report_emit, verify_report, ClassBalance, MethodResult, Prediction,
    RunReport, RunSummary, SmcTraceRow, REPORT_VERSION,
};
pub use run::{
    audit_samples, run_pipeline, METHOD_CORE_LSTM, METHOD_LOGISTIC_RAW, METHOD_SMC_LOGISTIC, METHOD_SMC_LSTM,
};
pub use synth::{default_split_months, synth_panel, trading_calendar, write_synth, SynthSpec};
