//! Twin experiments: configuration, data simulation, filter runs,
//! benchmarks and CSV output shared by the command-line tool.

mod commands;
mod config;
pub mod io;
mod twin;

pub use commands::{
    cmd_benchmark, cmd_filter, cmd_simulate, parse_kde_spec, repetition_seed, run_benchmark, with_dimension,
    write_benchmark, BenchmarkRow, EssSummary, FilterCommand, FilterOutcome, KdeRequest, RejectionStats, RunRecord,
    BENCHMARK_FILE, DIAGNOSTICS_FILE, ESTIMATES_FILE, KDE_FILE, KDE_POINTS, RECORD_FILE, TIMING_FILE,
};
pub use config::{
    Algorithm, BarrierSection, BenchmarkConfig, ConstraintConfig, ExperimentConfig, FilterConfig,
    IntegrationConfig, ModelConfig, ObservationConfig, Parallelism, RunConfig,
};
pub use twin::{
    filter_streams, padded_estimates, run_twin_filter, simulate_twin, time_grid, ExperimentModel, FilterRequest,
    TwinData,
};
