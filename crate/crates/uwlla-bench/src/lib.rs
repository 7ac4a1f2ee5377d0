//! Experiment driver for the robust weighted-regression classifier: TOML
//! configs, corruption sweeps with per-variant accuracy/trace/weight-map
//! artifacts, and reference-curve tables. The `uwlla-bench` binary is a thin
//! CLI over this library.

pub mod config;
pub mod curves;
pub mod experiment;

pub use config::{variant_name, ExperimentConfig};
pub use curves::{default_sigma_grid, density_params, emit_rank_curves, emit_weight_curves};
pub use experiment::{
    demo_synthetic, emit_weight_map, prepare_output_dir, run_experiment, sample_seed,
    INCOMPLETE_MARKER,
};
