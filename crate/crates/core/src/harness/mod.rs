//! Experiment configuration, sweeps, and result tables.

mod config;
mod sweep;
mod table;

pub use config::{
    Axis, ChainConfig, DepWeightsConfig, EvalConfig, ExperimentConfig, MemoryConfig, Paradigm, ReplayConfig, SolverConfig,
    SpecConfig, SweepConfig, WeightMode,
};
pub use sweep::{bound_at, bound_inputs, planned_weights, grid_constants, run_one, run_sweep, GridConstants, RunDetail, SweepResult, PROVENANCE};
pub use table::{
    aggregate, emit_plotdata, fit_loglog, fit_loglog_slope, plot_points, read_plotdata, read_table, table_to_string, write_table,
    PlotPoint, PlotSpec, Row, AGGREGATE, RUN,
};
