use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::PanelPaths;
use crate::predictor::TrainConfig;
use crate::smc::SmcConfig;

/// Everything one `run` needs. Relative paths in a config file are taken
/// relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub quant_csv: PathBuf,
    pub events_csv: PathBuf,
    pub sentiment_csv: PathBuf,
    pub dims: [usize; 3],
    pub tucker_ranks: [usize; 3],
    pub hooi_max_iters: usize,
    pub hooi_tol: f64,
    pub smc: SmcConfig,
    pub predictor: TrainConfig,
    pub threshold: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub corr_window: usize,
    pub train_months: usize,
    pub test_months: usize,
    pub out_dir: PathBuf,
    /// Seeds SMC initialization and every predictor; overrides the seeds in
    /// the `smc` and `predictor` tables.
    pub seed: u64,
    pub allow_missing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            quant_csv: PathBuf::from("quant.csv"),
            events_csv: PathBuf::from("events.csv"),
            sentiment_csv: PathBuf::from("sentiment.csv"),
            dims: [5, 8, 4],
            tucker_ranks: [3, 4, 2],
            hooi_max_iters: 25,
            hooi_tol: 1e-6,
            smc: SmcConfig::default(),
            predictor: TrainConfig::default(),
            threshold: 0.02,
            eps1: 0.1,
            eps2: 0.6,
            corr_window: 20,
            train_months: 9,
            test_months: 3,
            out_dir: PathBuf::from("out"),
            seed: 7,
            allow_missing: false,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; absent fields keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.quant_csv, &mut cfg.events_csv, &mut cfg.sentiment_csv, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn panel_paths(&self) -> PanelPaths {
        PanelPaths {
            quant: self.quant_csv.clone(),
            events: self.events_csv.clone(),
            sentiment: self.sentiment_csv.clone(),
        }
    }

    /// SMC settings with the run seed applied.
    pub fn smc_config(&self) -> SmcConfig {
        SmcConfig { seed: self.seed, ..self.smc.clone() }
    }

    /// Predictor settings with the run seed applied.
    pub fn predictor_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.predictor.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims[0] != 5 {
            return Err(Error::invalid(format!(
                "dims[0] must be 5 (the quant columns), got {}",
                self.dims[0]
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid("dims must be positive"));
        }
        for k in 0..3 {
            if self.tucker_ranks[k] == 0 || self.tucker_ranks[k] > self.dims[k] {
                return Err(Error::invalid(format!(
                    "tucker_ranks {:?} must lie in 1..=dims {:?}",
                    self.tucker_ranks, self.dims
                )));
            }
        }
        if self.hooi_max_iters == 0 || !(self.hooi_tol > 0.0) {
            return Err(Error::invalid("hooi_max_iters and hooi_tol must be positive"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            return Err(Error::invalid(format!("eps1 must lie in (0, 1), got {}", self.eps1)));
        }
        if !(self.eps2 > -1.0 && self.eps2 <= 1.0) {
            return Err(Error::invalid(format!("eps2 must lie in (-1, 1], got {}", self.eps2)));
        }
        if self.corr_window < 2 {
            return Err(Error::invalid("corr_window must be at least 2"));
        }
        if self.train_months == 0 || self.test_months == 0 {
            return Err(Error::invalid("train_months and test_months must be positive"));
        }
        self.smc_config().validate(self.dims)?;
        self.predictor_config().validate()
    }
}
