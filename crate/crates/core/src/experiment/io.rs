//! CSV files with a `# config_hash=… seed=…` comment line and a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::config::ExperimentConfig;
use super::twin::TwinData;
use crate::error::{Error, Result};
use crate::sde::StateVector;

pub const TRUTH_FILE: &str = "truth.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const H_FILE: &str = "H.csv";

/// Provenance written on the first line of every CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvMeta {
    pub config_hash: String,
    pub seed: u64,
}

impl CsvMeta {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        Self { config_hash: cfg.config_hash(), seed }
    }

    fn line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix('#')?.trim();
        let mut hash = None;
        let mut seed = None;
        for part in rest.split_whitespace() {
            match part.split_once('=') {
                Some(("config_hash", v)) => hash = Some(v.to_string()),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self { config_hash: hash?, seed: seed? })
    }
}

/// Shortest-safe round-trip format: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_table<I>(path: &Path, meta: &CsvMeta, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", meta.line()).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// A numeric CSV table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Option<CsvMeta>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let meta = text.lines().next().and_then(CsvMeta::parse);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: '{f}': {e}", rec.position().map_or(0, |p| p.line())),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { meta, header, rows })
}

fn indexed_header(first: &[&str], prefix: &str, count: usize) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((0..count).map(|i| format!("{prefix}{i}"))).collect()
}

fn step_rows<'a>(start: usize, h_o: f64, xs: &'a [DVector<f64>]) -> impl Iterator<Item = Vec<String>> + 'a {
    xs.iter().enumerate().map(move |(k, x)| {
        let n = start + k;
        let mut row = vec![n.to_string(), fmt_f64(n as f64 * h_o)];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        row
    })
}

/// Writes `step,time,x0..` rows for `xs`, the first of which is step `start`.
pub fn write_states(path: &Path, meta: &CsvMeta, h_o: f64, start: usize, xs: &[StateVector]) -> Result<()> {
    let d = xs.first().map_or(0, |x| x.len());
    write_table(path, meta, &indexed_header(&["step", "time"], "x", d), step_rows(start, h_o, xs))
}

pub fn save_twin(dir: &Path, cfg: &ExperimentConfig, data: &TwinData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = CsvMeta::new(cfg, cfg.run.seed);
    let h_o = cfg.observation.h_o;
    write_states(&dir.join(TRUTH_FILE), &meta, h_o, 0, &data.truth)?;
    write_table(
        &dir.join(OBSERVATIONS_FILE),
        &meta,
        &indexed_header(&["step", "time"], "y", data.h.ncols()),
        step_rows(1, h_o, &data.ys),
    )?;
    let rows = data.h.row_iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect());
    write_table(&dir.join(H_FILE), &meta, &indexed_header(&[], "h", data.h.ncols()), rows)
}

fn check_width(path: &Path, table: &Table, skip: usize, width: usize) -> Result<()> {
    if let Some(bad) = table.rows.iter().find(|r| r.len() != skip + width) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("expected {} columns, found a row with {}", skip + width, bad.len()),
        });
    }
    Ok(())
}

/// Reads data written by [`save_twin`] and checks it against `cfg`.
pub fn load_twin(dir: &Path, cfg: &ExperimentConfig) -> Result<TwinData> {
    let d_x = cfg.model.state_dim();
    let d_y = cfg.d_y();
    let path = dir.join(TRUTH_FILE);
    let truth_t = read_table(&path)?;
    check_width(&path, &truth_t, 2, d_x)?;
    if truth_t.rows.is_empty() {
        return Err(Error::Parse { path: path.display().to_string(), message: "no states".into() });
    }
    let path = dir.join(OBSERVATIONS_FILE);
    let obs_t = read_table(&path)?;
    check_width(&path, &obs_t, 2, d_y)?;
    if obs_t.rows.len() + 1 != truth_t.rows.len() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("{} observations for {} states", obs_t.rows.len(), truth_t.rows.len()),
        });
    }
    let path = dir.join(H_FILE);
    let h_t = read_table(&path)?;
    check_width(&path, &h_t, 0, d_y)?;
    if h_t.rows.len() != d_x {
        return Err(Error::Dimension { context: "H matrix rows", expected: d_x, got: h_t.rows.len() });
    }
    let truth = truth_t.rows.iter().map(|r| DVector::from_column_slice(&r[2..])).collect();
    let ys = obs_t.rows.iter().map(|r| DVector::from_column_slice(&r[2..])).collect();
    let h = DMatrix::from_fn(d_x, d_y, |i, j| h_t.rows[i][j]);
    Ok(TwinData { truth, h, ys })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::simulate_twin;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, 8.000000000000002] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn twin_round_trip_is_exact() {
        let mut cfg = ExperimentConfig::lorenz96(8);
        cfg.run.steps = 4;
        cfg.run.spinup = 0.5;
        cfg.integration.h = 0.01;
        let data = simulate_twin(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_twin(dir.path(), &cfg, &data).unwrap();
        assert_eq!(load_twin(dir.path(), &cfg).unwrap(), data);
        let t = read_table(&dir.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(t.meta, Some(CsvMeta::new(&cfg, 0)));
        assert_eq!(t.header[..3], ["step", "time", "x0"]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut cfg = ExperimentConfig::lorenz96(8);
        cfg.run.steps = 2;
        cfg.integration.h = 0.01;
        cfg.run.spinup = 0.0;
        let data = simulate_twin(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_twin(dir.path(), &cfg, &data).unwrap();
        let other = ExperimentConfig::lorenz96(10);
        assert!(matches!(load_twin(dir.path(), &other), Err(Error::Parse { .. })));
    }
}
