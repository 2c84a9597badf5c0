use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smc_core::fusion::read_panel;
use smc_core::pipeline::{load_report, render_table, run_pipeline, verify_report, write_synth, RunConfig, SynthSpec};
use smc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "smc", version, about = "Tensor fusion, SMC alignment and movement prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-signal panel and a matching config.toml
    Synth(SynthArgs),
    /// Validate the three input CSVs and print a summary
    IngestCheck(DataArgs),
    /// Run the full pipeline and write reports and checkpoints
    Run(RunArgs),
    /// Re-verify a report.json and print its table
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    stocks: usize,
    #[arg(long, default_value_t = 250)]
    days: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    signal_strength: f64,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    /// Feature counts per mode; the first must be 5.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 8, 4])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `run` and `ingest-check`. Explicit flags override the
/// config file, which overrides the defaults.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quant_csv: Option<PathBuf>,
    #[arg(long)]
    events_csv: Option<PathBuf>,
    #[arg(long)]
    sentiment_csv: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Skip unparseable rows and partial cells instead of failing.
    #[arg(long)]
    allow_missing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tucker_ranks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    reduced_dims: Option<Vec<usize>>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    corr_window: Option<usize>,
    #[arg(long)]
    train_months: Option<usize>,
    #[arg(long)]
    test_months: Option<usize>,
    /// ADAM step size for SMC.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iter_max: Option<usize>,
    #[arg(long)]
    cross_stock_weight: Option<f64>,
    /// Drop the orthonormality constraint on V (collapses toward zero).
    #[arg(long)]
    unconstrained: bool,
    /// Learn one set of V matrices per stock.
    #[arg(long)]
    per_stock: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run output directory containing report.json.
    #[arg(long)]
    dir: PathBuf,
}

fn triple(v: &[usize], flag: &str) -> Result<[usize; 3]> {
    v.try_into()
        .map_err(|_| Error::InvalidArgument(format!("--{flag} takes exactly three comma-separated values")))
}

fn base_config(data: &DataArgs) -> Result<RunConfig> {
    let mut cfg = match &data.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &data.quant_csv {
        cfg.quant_csv = p.clone();
    }
    if let Some(p) = &data.events_csv {
        cfg.events_csv = p.clone();
    }
    if let Some(p) = &data.sentiment_csv {
        cfg.sentiment_csv = p.clone();
    }
    if let Some(d) = &data.dims {
        cfg.dims = triple(d, "dims")?;
    }
    if data.allow_missing {
        cfg.allow_missing = true;
    }
    Ok(cfg)
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&args.data)?;
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { cfg.$($field).+ = v; })*
        };
    }
    set!(
        seed => seed,
        out => out_dir,
        threshold => threshold,
        eps1 => eps1,
        eps2 => eps2,
        corr_window => corr_window,
        train_months => train_months,
        test_months => test_months,
        alpha => smc.alpha,
        iter_max => smc.iter_max,
        cross_stock_weight => smc.cross_stock_weight,
        epochs => predictor.epochs,
        learning_rate => predictor.learning_rate,
        batch_size => predictor.batch_size,
        hidden_dim => predictor.hidden_dim,
        window => predictor.window,
    );
    if let Some(r) = &args.tucker_ranks {
        cfg.tucker_ranks = triple(r, "tucker-ranks")?;
    }
    if let Some(r) = &args.reduced_dims {
        cfg.smc.reduced_dims = triple(r, "reduced-dims")?;
    }
    if args.unconstrained {
        cfg.smc.constrain_orthonormal = false;
    }
    if args.per_stock {
        cfg.smc.per_stock = true;
    }
    Ok(cfg)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        stocks: args.stocks,
        days: args.days,
        dims: triple(&args.dims, "dims")?,
        n_clusters: args.clusters,
        signal_strength: args.signal_strength,
        noise: args.noise,
        seed: args.seed,
    };
    let (panel, cfg) = write_synth(&spec, &args.out)?;
    println!(
        "wrote {} stocks x {} days to {} (train {} / test {} months)",
        panel.num_stocks(),
        panel.num_days(),
        args.out.display(),
        cfg.train_months,
        cfg.test_months
    );
    Ok(())
}

fn ingest_check(args: &DataArgs) -> Result<()> {
    let cfg = base_config(args)?;
    let (panel, report) = read_panel(&cfg.panel_paths(), cfg.dims, cfg.allow_missing)?;
    println!("stocks {}  days {}", report.stocks, report.days);
    println!("rows read {}  rejected {}", report.rows_read, report.rows_rejected);
    println!("partial cells {}  missing cells {}", report.partial_cells, report.missing_cells);
    if let (Some(first), Some(last)) = (panel.dates().first(), panel.dates().last()) {
        println!("dates {first} .. {last}");
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let report = run_pipeline(&cfg)?;
    print!("{}", render_table(&report));
    println!("reports written to {}", cfg.out_dir.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let report = load_report(&args.dir.join("report.json"))?;
    verify_report(&report)?;
    print!("{}", render_table(&report));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::IngestCheck(a) => ingest_check(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
