//! Planted-signal market panels for end-to-end checks.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{write_panel, MarketPanel, PanelPaths, StockDayRecord};

/// Fraction of stock-days drawn with a small move (labelled Still).
const QUIET_RATE: f64 = 0.08;
/// Scale of the non-signal event and sentiment features.
const NUISANCE: f64 = 0.3;
/// Day-to-day wobble of the persistent valuation ratios.
const RATIO_WOBBLE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub stocks: usize,
    pub days: usize,
    pub dims: [usize; 3],
    /// Stock s belongs to cluster `s % n_clusters`. Use an even count so
    /// the sign pattern below is balanced.
    pub n_clusters: usize,
    pub signal_strength: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            stocks: 8,
            days: 250,
            dims: [5, 8, 4],
            n_clusters: 2,
            signal_strength: 1.0,
            noise: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stocks < 2 {
            return Err(Error::invalid(format!("need at least 2 stocks, got {}", self.stocks)));
        }
        if self.days < 60 {
            return Err(Error::invalid(format!("need at least 60 days, got {}", self.days)));
        }
        if self.dims[0] != 5 || self.dims[1] == 0 || self.dims[2] == 0 {
            return Err(Error::invalid(format!("dims must be (5, >0, >0), got {:?}", self.dims)));
        }
        if self.n_clusters == 0 || self.n_clusters > self.stocks {
            return Err(Error::invalid("n_clusters must lie in 1..=stocks"));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return Err(Error::invalid("signal_strength must be finite and nonnegative"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Consecutive weekdays starting on Monday 2015-01-05.
pub fn trading_calendar(days: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date");
    let mut out = Vec::with_capacity(days);
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Builds the panel.
///
/// Every cluster c has a direction `d[c][t] = ±1` per day and two fixed
/// signs `sq[c]`, `ss[c]`. On day t a stock's features carry
///
/// * turnover: `a·sq[c]`,
/// * first event feature: `a·d[c][t+1]·sq[c]·ss[c]`,
/// * first sentiment feature: `a·ss[c]`,
///
/// each plus `noise·N(0,1)`, where `a` is the signal strength. Their
/// product is `a³·d[c][t+1]`, the direction of the next day's move. The
/// product `sq·ss` alternates between clusters, so no linear function of
/// the raw features recovers the direction. The valuation ratios sit at a
/// positive per-stock level and the industry index at a positive
/// per-cluster level, both multiplied by `sq[c]` and given a small daily
/// wobble. Every quant feature then shares the sign of turnover, which
/// keeps the Tucker sign convention consistent within a cluster. The
/// remaining event and sentiment features are small independent noise.
pub fn synth_panel(spec: &SynthSpec) -> Result<MarketPanel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_s, n_t, n_c) = (spec.stocks, spec.days, spec.n_clusters);
    let a = spec.signal_strength;
    let nu = spec.noise;

    let q_start = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let p_start = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let alt = |c: usize| if c % 2 == 0 { 1.0 } else { -1.0 };
    let sq: Vec<f64> = (0..n_c).map(|c| q_start * alt(c)).collect();
    let ss: Vec<f64> = (0..n_c).map(|c| p_start * alt(c) * sq[c]).collect();

    // One extra day so the last features still have a next-day direction.
    let direction: Vec<Vec<f64>> = (0..n_c)
        .map(|_| (0..=n_t).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let industry_level: Vec<f64> = (0..n_c).map(|_| level(&mut rng)).collect();

    let dates = trading_calendar(n_t);
    let stocks: Vec<String> = (0..n_s).map(|s| format!("S{s:03}")).collect();
    let mut records = Vec::with_capacity(n_s * n_t);
    for (s, id) in stocks.iter().enumerate() {
        let c = s % n_c;
        let mut close = 10.0 + 40.0 * rng.random::<f64>();
        let ratio_level: [f64; 3] = std::array::from_fn(|_| level(&mut rng));
        for (t, date) in dates.iter().enumerate() {
            let quiet = rng.random::<f64>() < QUIET_RATE;
            let u: f64 = rng.random();
            let magnitude = if quiet { 0.015 * u } else { 0.025 + 0.02 * u };
            let shock: f64 = rng.sample(StandardNormal);
            let p_change = direction[c][t] * magnitude + nu * 0.01 * shock;
            close *= 1.0 + p_change;

            let next = direction[c][t + 1];
            let mut gauss = || -> f64 { rng.sample(StandardNormal) };
            let latent_q = [
                a * sq[c] + nu * gauss(),
                sq[c] * ratio_level[0] + RATIO_WOBBLE * gauss(),
                sq[c] * ratio_level[1] + RATIO_WOBBLE * gauss(),
                sq[c] * ratio_level[2] + RATIO_WOBBLE * gauss(),
                sq[c] * industry_level[c] + RATIO_WOBBLE * gauss(),
            ];
            let quant = vec![
                0.05 + 0.01 * latent_q[0],
                15.0 + 3.0 * latent_q[1],
                2.0 + 0.4 * latent_q[2],
                12.0 + 2.0 * latent_q[3],
                1000.0 + 40.0 * latent_q[4],
            ];
            let mut event = Vec::with_capacity(spec.dims[1]);
            event.push(a * next * sq[c] * ss[c] + nu * gauss());
            event.extend((1..spec.dims[1]).map(|_| NUISANCE * gauss()));
            let mut sentiment = Vec::with_capacity(spec.dims[2]);
            sentiment.push(a * ss[c] + nu * gauss());
            sentiment.extend((1..spec.dims[2]).map(|_| NUISANCE * gauss()));

            records.push(StockDayRecord {
                stock_id: id.clone(),
                date: *date,
                quant,
                event,
                sentiment,
                close,
                p_change,
            });
        }
    }
    MarketPanel::new(stocks, dates, records, spec.dims)
}

/// Persistent positive level of a valuation ratio or industry index.
fn level(rng: &mut ChaCha8Rng) -> f64 {
    (0.25 * rng.sample::<f64, _>(StandardNormal)).exp()
}

/// Train/test months that fit the calendar: 9/3 for a full year, about a
/// quarter of the months for testing otherwise.
pub fn default_split_months(dates: &[NaiveDate]) -> (usize, usize) {
    let mut months: Vec<(i32, u32)> = dates.iter().map(|d| (d.year(), d.month())).collect();
    months.dedup();
    let m = months.len();
    let test = ((m as f64) / 4.0).round().max(1.0) as usize;
    (m.saturating_sub(test).max(1), test)
}

/// Generates a panel and writes `quant.csv`, `events.csv`,
/// `sentiment.csv` and a matching `config.toml` into `dir`.
pub fn write_synth(spec: &SynthSpec, dir: &Path) -> Result<(MarketPanel, RunConfig)> {
    let panel = synth_panel(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_panel(&panel, &PanelPaths::in_dir(dir))?;
    let (train_months, test_months) = default_split_months(panel.dates());
    let mut cfg = RunConfig {
        dims: spec.dims,
        tucker_ranks: spec.dims.map(|d| d.div_ceil(2)),
        train_months,
        test_months,
        out_dir: "run".into(),
        seed: spec.seed,
        ..RunConfig::default()
    };
    cfg.smc.reduced_dims = cfg.tucker_ranks;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok((panel, cfg))
}
