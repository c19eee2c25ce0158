//! The `simulate`, `filter` and `benchmark` pipelines behind the CLI.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Algorithm, ExperimentConfig, ModelConfig};
use super::io::{fmt_f64, load_twin, save_twin, write_states, write_table, CsvMeta};
use super::twin::{padded_estimates, run_twin_filter, simulate_twin, FilterRequest, TwinData};
use crate::analysis::{kde_marginal, nmse, silverman_bandwidth};
use crate::error::{Error, Result};
use crate::filters::{FilterRun, ParticleEnsemble};
use crate::rng::mix;

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const KDE_FILE: &str = "kde.csv";
pub const RECORD_FILE: &str = "record.json";
pub const TIMING_FILE: &str = "timing.json";
pub const BENCHMARK_FILE: &str = "benchmark.csv";

/// Points per KDE grid.
pub const KDE_POINTS: usize = 256;

/// Simulates the twin data of `cfg` and writes it to `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<TwinData> {
    let data = simulate_twin(cfg)?;
    save_twin(out, cfg, &data)?;
    Ok(data)
}

/// A marginal density request; `coord` counts from 1 like `X_1, …, X_{d_x}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdeRequest {
    pub coord: usize,
    pub step: usize,
}

/// Parses `"coord:step,coord:step,…"`.
pub fn parse_kde_spec(spec: &str) -> Result<Vec<KdeRequest>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || Error::InvalidInput(format!("--kde entry '{item}' is not coord:step"));
            let (c, s) = item.split_once(':').ok_or_else(bad)?;
            let coord: usize = c.trim().parse().map_err(|_| bad())?;
            let step: usize = s.trim().parse().map_err(|_| bad())?;
            if coord == 0 {
                return Err(Error::InvalidInput(format!("--kde coordinates start at 1, got '{item}'")));
            }
            Ok(KdeRequest { coord, step })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EssSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RejectionStats {
    /// Mean over steps of the per-step mean proposal count.
    pub attempts_mean: f64,
    pub attempts_max: usize,
    pub initial_attempts_max: usize,
}

/// Summary of one filter run, written to `record.json`. The wall time is kept
/// out of that file so that it stays byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub d_x: usize,
    pub particles: usize,
    pub steps: usize,
    pub steps_completed: usize,
    /// Over all steps, with the last available estimate carried forward after
    /// a failure; `None` when there are no steps.
    pub nmse: Option<f64>,
    pub ess: EssSummary,
    pub rejection: RejectionStats,
    pub fallback_steps: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

fn summarise(
    cfg: &ExperimentConfig,
    data: &TwinData,
    algorithm: Algorithm,
    seed: u64,
    run: Option<&FilterRun>,
    error: Option<&Error>,
) -> Result<RunRecord> {
    let steps = data.steps();
    let estimates = padded_estimates(run, &data.truth[0], steps);
    let nmse = if steps == 0 { None } else { Some(nmse(&data.truth[1..], &estimates)?) };
    let trace = run.map(|r| r.trace.as_slice()).unwrap_or_default();
    let ess = if trace.is_empty() {
        EssSummary::default()
    } else {
        EssSummary {
            min: trace.iter().map(|t| t.ess).fold(f64::INFINITY, f64::min),
            mean: trace.iter().map(|t| t.ess).sum::<f64>() / trace.len() as f64,
            max: trace.iter().map(|t| t.ess).fold(0.0, f64::max),
        }
    };
    let rejection = RejectionStats {
        attempts_mean: if trace.is_empty() {
            0.0
        } else {
            trace.iter().map(|t| t.attempts_mean).sum::<f64>() / trace.len() as f64
        },
        attempts_max: trace.iter().map(|t| t.attempts_max).max().unwrap_or(0),
        initial_attempts_max: run.map_or(0, |r| r.initial_attempts_max),
    };
    Ok(RunRecord {
        config_hash: cfg.config_hash(),
        seed,
        algorithm,
        d_x: cfg.model.state_dim(),
        particles: cfg.filter.particles,
        steps,
        steps_completed: run.map_or(0, |r| r.steps_completed()),
        nmse,
        ess,
        rejection,
        fallback_steps: trace.iter().filter(|t| t.fallback).count(),
        error: error.map(|e| e.to_string()),
        wall_time: trace.iter().map(|t| t.wall_time).sum(),
    })
}

/// Options of `cmd_filter` that are not part of the config.
#[derive(Debug, Clone, Default)]
pub struct FilterCommand {
    pub paper_mode: bool,
    pub parallel: bool,
    pub kde: Vec<KdeRequest>,
}

/// The record of a filter run and the error that stopped it, if any. Outputs
/// are written in both cases.
#[derive(Debug)]
pub struct FilterOutcome {
    pub record: RunRecord,
    pub error: Option<Error>,
}

fn ensemble_weights(e: &ParticleEnsemble) -> Vec<f64> {
    e.weights().unwrap_or_else(|_| vec![1.0 / e.len() as f64; e.len()])
}

/// Weighted Gaussian KDE of one coordinate on a grid spanning the particles
/// plus four bandwidths on each side.
fn kde_rows(req: KdeRequest, ens: &ParticleEnsemble) -> Result<Vec<Vec<String>>> {
    let xs: Vec<f64> = ens.states.iter().map(|x| x[req.coord - 1]).collect();
    let w = ensemble_weights(ens);
    let bw = silverman_bandwidth(&xs, &w);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * bw;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bw;
    let grid: Vec<f64> = (0..KDE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (KDE_POINTS - 1) as f64).collect();
    let est = kde_marginal(&xs, Some(&w), &grid, Some(bw))?;
    Ok(est
        .grid
        .iter()
        .zip(&est.values)
        .map(|(x, v)| vec![req.coord.to_string(), req.step.to_string(), fmt_f64(*x), fmt_f64(*v), fmt_f64(bw)])
        .collect())
}

/// Runs `cfg.filter.algorithm` with seed `cfg.run.seed` on the data in
/// `data_dir` and writes estimates, diagnostics, KDEs and the run record to
/// `out`.
pub fn cmd_filter(cfg: &ExperimentConfig, data_dir: &Path, out: &Path, cmd: &FilterCommand) -> Result<FilterOutcome> {
    let data = load_twin(data_dir, cfg)?;
    let d_x = cfg.model.state_dim();
    for req in &cmd.kde {
        if req.coord > d_x {
            return Err(Error::InvalidInput(format!("--kde coordinate {} exceeds d_x = {d_x}", req.coord)));
        }
        if req.step > data.steps() {
            return Err(Error::InvalidInput(format!("--kde step {} exceeds M = {}", req.step, data.steps())));
        }
    }
    let mut snapshot_steps: Vec<usize> = cmd.kde.iter().map(|r| r.step).collect();
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();
    let request = FilterRequest {
        degeneracy: ExperimentConfig::degeneracy_policy(cmd.paper_mode),
        parallel: cmd.parallel,
        snapshot_steps,
    };
    let seed = cfg.run.seed;
    let algorithm = cfg.filter.algorithm;
    let started = Instant::now();
    let (run, error) = run_twin_filter(cfg, &data, algorithm, seed, &request);
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(e) = &error {
        if !e.is_degeneracy() {
            return Err(error.expect("checked"));
        }
    }
    let mut record = summarise(cfg, &data, algorithm, seed, run.as_ref(), error.as_ref())?;
    record.wall_time = elapsed;

    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })?;
    let meta = CsvMeta::new(cfg, seed);
    let h_o = cfg.observation.h_o;
    let estimates = run.as_ref().map(|r| r.estimates.clone()).unwrap_or_default();
    if estimates.is_empty() {
        let header: Vec<String> =
            ["step", "time"].into_iter().map(String::from).chain((0..d_x).map(|i| format!("x{i}"))).collect();
        write_table(&out.join(ESTIMATES_FILE), &meta, &header, Vec::new())?;
    } else {
        write_states(&out.join(ESTIMATES_FILE), &meta, h_o, 1, &estimates)?;
    }

    let header: Vec<String> =
        ["step", "ess", "attempts_mean", "attempts_max", "log_evidence_increment", "fallback", "squared_error"]
            .map(String::from)
            .to_vec();
    let trace = run.as_ref().map(|r| r.trace.clone()).unwrap_or_default();
    let rows = trace.iter().map(|t| {
        let err = (&t.mean - &data.truth[t.step]).norm_squared();
        vec![
            t.step.to_string(),
            fmt_f64(t.ess),
            fmt_f64(t.attempts_mean),
            t.attempts_max.to_string(),
            fmt_f64(t.log_evidence_increment),
            u8::from(t.fallback).to_string(),
            fmt_f64(err),
        ]
    });
    write_table(&out.join(DIAGNOSTICS_FILE), &meta, &header, rows)?;

    if !cmd.kde.is_empty() {
        let mut rows = Vec::new();
        for req in &cmd.kde {
            let snap = run.as_ref().and_then(|r| r.snapshots.iter().find(|s| s.step == req.step));
            if let Some(snap) = snap {
                rows.extend(kde_rows(*req, &snap.ensemble)?);
            }
        }
        let header = ["coord", "step", "x", "density", "bandwidth"].map(String::from).to_vec();
        write_table(&out.join(KDE_FILE), &meta, &header, rows)?;
    }

    let json = serde_json::to_string_pretty(&record).expect("record serialises") + "\n";
    let path = out.join(RECORD_FILE);
    std::fs::write(&path, json).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let timing = serde_json::json!({ "wall_time_s": elapsed }).to_string() + "\n";
    let path = out.join(TIMING_FILE);
    std::fs::write(&path, timing).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(FilterOutcome { record, error })
}

/// One `(d_x, algorithm)` cell of a benchmark sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub d_x: usize,
    pub algorithm: Algorithm,
    pub reps: usize,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub degenerate_runs: usize,
}

/// `cfg` with the state dimension replaced by `d_x`.
pub fn with_dimension(cfg: &ExperimentConfig, d_x: usize) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match &mut c.model {
        ModelConfig::Lorenz96 { d_x: d, .. } | ModelConfig::Ou { d_x: d, .. } => *d = d_x,
        ModelConfig::Discrete { .. } => {
            return Err(Error::InvalidConfig("model.type: benchmark needs lorenz96 or ou".into()))
        }
    }
    if cfg.observation.d_y.is_some_and(|d_y| d_y > d_x) {
        c.observation.d_y = None;
    }
    c.validate()?;
    Ok(c)
}

/// Seed of repetition `rep` in dimension `d_x`; shared by every algorithm so
/// that they filter the same data.
pub fn repetition_seed(base: u64, d_x: usize, rep: usize) -> u64 {
    mix(&[base, d_x as u64, rep as u64])
}

/// NMSE of every algorithm on every repetition in dimension `d_x`, in the
/// order of `algorithms`. Degenerate runs count with their padded estimates.
fn benchmark_dimension(
    cfg: &ExperimentConfig,
    algorithms: &[Algorithm],
    reps: usize,
    paper_mode: bool,
    parallel: bool,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let d_x = cfg.model.state_dim();
    let one = |rep: usize| -> Result<Vec<(f64, bool)>> {
        let mut c = cfg.clone();
        c.run.seed = repetition_seed(cfg.run.seed, d_x, rep);
        let data = simulate_twin(&c)?;
        let request = FilterRequest {
            degeneracy: ExperimentConfig::degeneracy_policy(paper_mode),
            parallel: false,
            snapshot_steps: Vec::new(),
        };
        algorithms
            .iter()
            .map(|&alg| {
                let (run, err) = run_twin_filter(&c, &data, alg, c.run.seed, &request);
                match err {
                    Some(e) if !e.is_degeneracy() => Err(e),
                    err => {
                        let est = padded_estimates(run.as_ref(), &data.truth[0], data.steps());
                        Ok((nmse(&data.truth[1..], &est)?, err.is_some()))
                    }
                }
            })
            .collect()
    };
    let per_rep: Vec<Result<Vec<(f64, bool)>>> = if parallel {
        (0..reps).into_par_iter().map(one).collect()
    } else {
        (0..reps).map(one).collect()
    };
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..algorithms.len())
        .map(|a| {
            let vals = per_rep.iter().map(|r| r[a].0).collect();
            let degenerate = per_rep.iter().filter(|r| r[a].1).count();
            (vals, degenerate)
        })
        .collect())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and standard deviation of the NMSE over `cfg.run.repetitions` seeded
/// twin experiments for every `(d_x, algorithm)` in `cfg.benchmark`, sorted by
/// dimension then algorithm name.
pub fn run_benchmark(cfg: &ExperimentConfig, paper_mode: bool, parallel: bool) -> Result<Vec<BenchmarkRow>> {
    let reps = cfg.run.repetitions;
    if reps < 2 {
        return Err(Error::InvalidConfig(format!("run.repetitions: benchmark needs >= 2, got {reps}")));
    }
    let mut algorithms = cfg.benchmark.algorithms.clone();
    algorithms.sort_by_key(|a| a.name());
    algorithms.dedup();
    let mut dims = cfg.benchmark.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    if algorithms.is_empty() || dims.is_empty() {
        return Err(Error::InvalidConfig("benchmark: dims and algorithms must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &d in &dims {
        let c = with_dimension(cfg, d)?;
        for (alg, (vals, degenerate_runs)) in algorithms.iter().zip(benchmark_dimension(&c, &algorithms, reps, paper_mode, parallel)?) {
            let (mean_nmse, std_nmse) = mean_std(&vals);
            rows.push(BenchmarkRow { d_x: d, algorithm: *alg, reps, mean_nmse, std_nmse, degenerate_runs });
        }
    }
    Ok(rows)
}

pub fn write_benchmark(path: &Path, cfg: &ExperimentConfig, rows: &[BenchmarkRow]) -> Result<()> {
    let header = ["d_x", "algorithm", "reps", "mean_nmse", "std_nmse", "degenerate_runs"].map(String::from).to_vec();
    let body = rows.iter().map(|r| {
        vec![
            r.d_x.to_string(),
            r.algorithm.name().to_string(),
            r.reps.to_string(),
            fmt_f64(r.mean_nmse),
            fmt_f64(r.std_nmse),
            r.degenerate_runs.to_string(),
        ]
    });
    write_table(path, &CsvMeta::new(cfg, cfg.run.seed), &header, body)
}

pub fn cmd_benchmark(cfg: &ExperimentConfig, out: &Path, paper_mode: bool, parallel: bool) -> Result<Vec<BenchmarkRow>> {
    let rows = run_benchmark(cfg, paper_mode, parallel)?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })?;
    write_benchmark(&out.join(BENCHMARK_FILE), cfg, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::io::read_table;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::lorenz96(8);
        cfg.run.steps = 6;
        cfg.run.spinup = 0.5;
        cfg.integration.h = 0.01;
        cfg.filter.particles = 30;
        cfg
    }

    #[test]
    fn kde_spec_parsing() {
        let r = parse_kde_spec("1:75, 10:75,50:75,60:75").unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r[1], KdeRequest { coord: 10, step: 75 });
        assert!(parse_kde_spec("0:3").is_err());
        assert!(parse_kde_spec("3").is_err());
        assert!(parse_kde_spec("a:b").is_err());
    }

    #[test]
    fn simulate_with_zero_steps() {
        let mut cfg = tiny();
        cfg.run.steps = 0;
        let dir = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, dir.path()).unwrap();
        let truth = read_table(&dir.path().join(super::super::io::TRUTH_FILE)).unwrap();
        let obs = read_table(&dir.path().join(super::super::io::OBSERVATIONS_FILE)).unwrap();
        assert_eq!(truth.rows.len(), 1);
        assert!(obs.rows.is_empty());
    }

    #[test]
    fn default_observation_spacing() {
        let mut cfg = ExperimentConfig::lorenz96(8);
        cfg.run.steps = 3;
        cfg.run.spinup = 0.0;
        let grid = crate::experiment::time_grid(&cfg, 3).unwrap();
        assert_eq!(grid.substeps(), 100);
        let dir = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, dir.path()).unwrap();
        let obs = read_table(&dir.path().join(super::super::io::OBSERVATIONS_FILE)).unwrap();
        let times: Vec<f64> = obs.rows.iter().map(|r| r[1]).collect();
        assert_eq!(obs.rows.len(), 3);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.1 * (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_writes_all_outputs_and_kde() {
        let cfg = tiny();
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, data.path()).unwrap();
        let cmd = FilterCommand { kde: parse_kde_spec("1:3,8:6").unwrap(), ..Default::default() };
        let outcome = cmd_filter(&cfg, data.path(), out.path(), &cmd).unwrap();
        assert!(outcome.error.is_none());
        assert_eq!(outcome.record.steps_completed, 6);
        assert!(outcome.record.nmse.unwrap().is_finite());
        let est = read_table(&out.path().join(ESTIMATES_FILE)).unwrap();
        assert_eq!(est.rows.len(), 6);
        let kde = read_table(&out.path().join(KDE_FILE)).unwrap();
        assert_eq!(kde.rows.len(), 2 * KDE_POINTS);
        let dx = kde.rows[1][2] - kde.rows[0][2];
        let mass: f64 = kde.rows[..KDE_POINTS].iter().map(|r| r[3]).sum::<f64>() * dx;
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }

    #[test]
    fn shared_sections_share_hash() {
        let cfg = tiny();
        let data = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, data.path()).unwrap();
        let mut hashes = Vec::new();
        for alg in [Algorithm::Bootstrap, Algorithm::ConstrainedBarrier] {
            let mut c = cfg.clone();
            c.filter.algorithm = alg;
            let out = tempfile::tempdir().unwrap();
            hashes.push(cmd_filter(&c, data.path(), out.path(), &FilterCommand::default()).unwrap().record.config_hash);
        }
        assert_eq!(hashes[0], hashes[1]);
    }

    #[test]
    fn rejection_on_tiny_ou_problem() {
        let mut cfg = tiny();
        cfg.model = ModelConfig::Ou { d_x: 2, theta: 1.0, sigma: 1.0 };
        cfg.observation.d_y = Some(1);
        cfg.filter.algorithm = Algorithm::ConstrainedRejection;
        cfg.filter.constraint.threshold = -20.0;
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, data.path()).unwrap();
        let outcome = cmd_filter(&cfg, data.path(), out.path(), &FilterCommand::default()).unwrap();
        assert!(outcome.error.is_none());
        let r = &outcome.record;
        assert_eq!(r.steps_completed, 6);
        assert!(r.ess.min >= 1.0 && r.ess.max <= 30.0);
        assert!(r.rejection.attempts_mean >= 1.0 && r.rejection.attempts_max >= 1);
        let diag = read_table(&out.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert_eq!(diag.rows.len(), 6);
        assert!(diag.rows.iter().all(|row| row.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn benchmark_single_cell_and_order_independence() {
        let mut cfg = tiny();
        cfg.run.repetitions = 2;
        cfg.benchmark.dims = vec![8];
        cfg.benchmark.algorithms = vec![Algorithm::Bootstrap];
        let rows = run_benchmark(&cfg, true, false).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].mean_nmse.is_finite() && rows[0].std_nmse.is_finite());

        cfg.benchmark.dims = vec![10, 8];
        cfg.benchmark.algorithms = vec![Algorithm::ConstrainedBarrier, Algorithm::Bootstrap];
        let a = run_benchmark(&cfg, true, true).unwrap();
        cfg.benchmark.dims = vec![8, 10];
        cfg.benchmark.algorithms = vec![Algorithm::Bootstrap, Algorithm::ConstrainedBarrier];
        let b = run_benchmark(&cfg, true, false).unwrap();
        assert_eq!(a, b);
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        write_benchmark(&da.path().join("b.csv"), &cfg, &a).unwrap();
        write_benchmark(&db.path().join("b.csv"), &cfg, &b).unwrap();
        assert_eq!(std::fs::read(da.path().join("b.csv")).unwrap(), std::fs::read(db.path().join("b.csv")).unwrap());
    }

    #[test]
    fn benchmark_needs_two_repetitions() {
        let cfg = tiny();
        assert!(matches!(run_benchmark(&cfg, false, false), Err(Error::InvalidConfig(_))));
    }
}
