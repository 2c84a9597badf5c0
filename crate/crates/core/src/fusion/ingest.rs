//! CSV ingest and emission for the three feature files.
//!
//! quant.csv:     stock_id,date,turnover,pe,pb,pcf,industry_index,close,p_change
//! events.csv:    stock_id,date,e1,...,eN
//! sentiment.csv: stock_id,date,s1,...,sM

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::panel::{MarketPanel, StockDayRecord};
use crate::error::{Error, Result};

pub const QUANT_COLUMNS: [&str; 5] = ["turnover", "pe", "pb", "pcf", "industry_index"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelPaths {
    pub quant: PathBuf,
    pub events: PathBuf,
    pub sentiment: PathBuf,
}

impl PanelPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            quant: dir.join("quant.csv"),
            events: dir.join("events.csv"),
            sentiment: dir.join("sentiment.csv"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    /// (stock, date) keys present in some files but not all.
    pub partial_cells: usize,
    pub missing_cells: usize,
    pub stocks: usize,
    pub days: usize,
}

type Key = (String, NaiveDate);

struct ParsedFile {
    rows: BTreeMap<Key, (u64, Vec<f64>)>,
    read: usize,
    rejected: usize,
}

fn expected_header(kind: &str, width: usize) -> Vec<String> {
    let mut h = vec!["stock_id".to_string(), "date".to_string()];
    match kind {
        "quant" => {
            h.extend(QUANT_COLUMNS.iter().map(|s| s.to_string()));
            h.push("close".into());
            h.push("p_change".into());
        }
        "events" => h.extend((1..=width).map(|i| format!("e{i}"))),
        _ => h.extend((1..=width).map(|i| format!("s{i}"))),
    }
    h
}

fn parse_file(path: &Path, kind: &str, width: usize, allow_missing: bool) -> Result<ParsedFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = expected_header(kind, width);
    if header != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("header {:?} does not match {:?}", header.join(","), expected.join(",")),
        });
    }

    let mut out = ParsedFile {
        rows: BTreeMap::new(),
        read: 0,
        rejected: 0,
    };
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        out.read += 1;
        let parsed = parse_row(&row, expected.len(), kind);
        match parsed {
            Ok((key, values)) => {
                if let Some((first, _)) = out.rows.get(&key) {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        message: format!("duplicate row for {} {} (first at line {first})", key.0, key.1),
                    });
                }
                out.rows.insert(key, (line, values));
            }
            Err(message) if allow_missing => {
                let _ = message;
                out.rejected += 1;
            }
            Err(message) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message,
                })
            }
        }
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, width: usize, kind: &str) -> std::result::Result<(Key, Vec<f64>), String> {
    if row.len() != width {
        return Err(format!("expected {width} fields, found {}", row.len()));
    }
    let stock = row[0].trim();
    if stock.is_empty() {
        return Err("empty stock_id".into());
    }
    let date = NaiveDate::parse_from_str(row[1].trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date {:?}: {e}", &row[1]))?;
    let mut values = Vec::with_capacity(width - 2);
    for (i, field) in row.iter().enumerate().skip(2) {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| format!("column {} is not a number: {field:?}", i + 1))?;
        if !v.is_finite() {
            return Err(format!("column {} is not finite", i + 1));
        }
        values.push(v);
    }
    if kind == "quant" {
        let close = values[QUANT_COLUMNS.len()];
        let p_change = values[QUANT_COLUMNS.len() + 1];
        if close <= 0.0 {
            return Err(format!("close must be positive, got {close}"));
        }
        if p_change <= -1.0 {
            return Err(format!("p_change must exceed -1, got {p_change}"));
        }
    }
    Ok(((stock.to_string(), date), values))
}

/// Reads the three CSV files into a panel.
///
/// The calendar is the union of all dates and the stock list the sorted
/// union of ids. A cell is present when all three files carry it and
/// missing when none do. Without `allow_missing`, unparseable rows and
/// cells found in only some files are errors; with it they are counted
/// and dropped.
pub fn read_panel(paths: &PanelPaths, dims: [usize; 3], allow_missing: bool) -> Result<(MarketPanel, IngestReport)> {
    if dims[0] != QUANT_COLUMNS.len() {
        return Err(Error::invalid(format!(
            "quant mode has {} features in the CSV schema, configured {}",
            QUANT_COLUMNS.len(),
            dims[0]
        )));
    }
    for p in [&paths.quant, &paths.events, &paths.sentiment] {
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    let quant = parse_file(&paths.quant, "quant", dims[0], allow_missing)?;
    let events = parse_file(&paths.events, "events", dims[1], allow_missing)?;
    let sentiment = parse_file(&paths.sentiment, "sentiment", dims[2], allow_missing)?;

    let mut report = IngestReport {
        rows_read: quant.read + events.read + sentiment.read,
        rows_rejected: quant.rejected + events.rejected + sentiment.rejected,
        ..Default::default()
    };

    let keys: BTreeSet<&Key> = quant
        .rows
        .keys()
        .chain(events.rows.keys())
        .chain(sentiment.rows.keys())
        .collect();
    let stocks: Vec<String> = keys
        .iter()
        .map(|k| k.0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dates: Vec<NaiveDate> = keys.iter().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();

    let mut records = Vec::new();
    for key in keys {
        match (quant.rows.get(key), events.rows.get(key), sentiment.rows.get(key)) {
            (Some((_, q)), Some((_, e)), Some((_, s))) => {
                let n = QUANT_COLUMNS.len();
                records.push(StockDayRecord {
                    stock_id: key.0.clone(),
                    date: key.1,
                    quant: q[..n].to_vec(),
                    event: e.clone(),
                    sentiment: s.clone(),
                    close: q[n],
                    p_change: q[n + 1],
                });
            }
            (q, e, s) => {
                if !allow_missing {
                    let (path, line) = [(&paths.quant, q), (&paths.events, e), (&paths.sentiment, s)]
                        .into_iter()
                        .find_map(|(p, r)| r.map(|(l, _)| (p.clone(), *l)))
                        .expect("key came from some file");
                    let absent: Vec<String> = [(&paths.quant, q), (&paths.events, e), (&paths.sentiment, s)]
                        .into_iter()
                        .filter(|(_, r)| r.is_none())
                        .map(|(p, _)| p.display().to_string())
                        .collect();
                    return Err(Error::Parse {
                        path,
                        line,
                        message: format!("{} {} has no matching row in {}", key.0, key.1, absent.join(", ")),
                    });
                }
                report.partial_cells += 1;
            }
        }
    }

    let panel = MarketPanel::new(stocks, dates, records, dims)?;
    report.missing_cells = panel.missing_cells();
    report.stocks = panel.num_stocks();
    report.days = panel.num_days();
    Ok((panel, report))
}

/// Writes the panel as the three CSV files, stock-major then by date.
/// Numbers use the shortest representation that round-trips.
pub fn write_panel(panel: &MarketPanel, paths: &PanelPaths) -> Result<()> {
    let dims = panel.dims();
    let mut quant = expected_header("quant", dims[0]).join(",");
    let mut events = expected_header("events", dims[1]).join(",");
    let mut sentiment = expected_header("sentiment", dims[2]).join(",");
    for buf in [&mut quant, &mut events, &mut sentiment] {
        buf.push('\n');
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    for s in 0..panel.num_stocks() {
        for t in 0..panel.num_days() {
            let Some(r) = panel.record(s, t) else { continue };
            let date = r.date.format("%Y-%m-%d");
            let _ = writeln!(quant, "{},{date},{},{},{}", r.stock_id, join(&r.quant), r.close, r.p_change);
            let _ = writeln!(events, "{},{date},{}", r.stock_id, join(&r.event));
            let _ = writeln!(sentiment, "{},{date},{}", r.stock_id, join(&r.sentiment));
        }
    }
    for (path, body) in [(&paths.quant, quant), (&paths.events, events), (&paths.sentiment, sentiment)] {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn fixture(dir: &Path) -> PanelPaths {
        write(
            dir,
            "quant.csv",
            "stock_id,date,turnover,pe,pb,pcf,industry_index,close,p_change\n\
             A,2015-01-05,0.1,10,1,5,100,10.5,0.03\n\
             A,2015-01-06,0.2,11,1,5,101,10.0,-0.0476\n\
             B,2015-01-05,0.3,12,2,6,100,20,0.001\n",
        );
        write(
            dir,
            "events.csv",
            "stock_id,date,e1,e2\nA,2015-01-05,1,0\nA,2015-01-06,0,1\nB,2015-01-05,0.5,0.5\n",
        );
        write(
            dir,
            "sentiment.csv",
            "stock_id,date,s1\nA,2015-01-05,0.2\nA,2015-01-06,-0.1\nB,2015-01-05,0\n",
        );
        PanelPaths::in_dir(dir)
    }

    #[test]
    fn reads_complete_panel() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path());
        let (panel, report) = read_panel(&paths, [5, 2, 1], false).unwrap();
        assert_eq!(panel.stocks(), &["A".to_string(), "B".to_string()]);
        assert_eq!(panel.num_days(), 2);
        assert_eq!(report.rows_read, 9);
        assert_eq!(report.missing_cells, 1);
        let a1 = panel.record(0, 1).unwrap();
        assert_eq!(a1.quant, vec![0.2, 11.0, 1.0, 5.0, 101.0]);
        assert_eq!(a1.p_change, -0.0476);
        assert!(!panel.is_present(1, 1));
    }

    #[test]
    fn bad_number_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path());
        write(dir.path(), "events.csv", "stock_id,date,e1,e2\nA,2015-01-05,1,0\nA,2015-01-06,zero,1\nB,2015-01-05,0.5,0.5\n");
        let err = read_panel(&paths, [5, 2, 1], false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("events.csv:3"), "{msg}");

        let (panel, report) = read_panel(&paths, [5, 2, 1], true).unwrap();
        assert_eq!(report.rows_rejected, 1);
        assert_eq!(report.partial_cells, 1);
        assert!(!panel.is_present(0, 1));
    }

    #[test]
    fn partial_cell_fails_closed() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path());
        write(dir.path(), "sentiment.csv", "stock_id,date,s1\nA,2015-01-05,0.2\nB,2015-01-05,0\n");
        let msg = read_panel(&paths, [5, 2, 1], false).unwrap_err().to_string();
        assert!(msg.contains("no matching row"), "{msg}");
        assert!(read_panel(&paths, [5, 2, 1], true).is_ok());
    }

    #[test]
    fn header_and_missing_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path());
        assert!(read_panel(&paths, [5, 3, 1], false).unwrap_err().to_string().contains("header"));
        assert!(read_panel(&paths, [4, 2, 1], false).is_err());
        fs::remove_file(&paths.sentiment).unwrap();
        let msg = read_panel(&paths, [5, 2, 1], false).unwrap_err().to_string();
        assert!(msg.contains("sentiment.csv"), "{msg}");
    }

    #[test]
    fn write_then_read_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path());
        let (panel, _) = read_panel(&paths, [5, 2, 1], false).unwrap();
        let out = PanelPaths::in_dir(&dir.path().join("copy"));
        write_panel(&panel, &out).unwrap();
        let (again, _) = read_panel(&out, [5, 2, 1], false).unwrap();
        assert_eq!(panel, again);
    }
}
