//! Experiment orchestration: configuration documents, convergence sweeps,
//! and report rendering.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{
    build_problem, config_hash, load_config, make_evolver, validate_config, Config, SweepKind,
};
pub use report::{load_report, render_csv, render_svg, write_report, SweepRecord, SweepReport};
pub use sweep::{
    l2_distance, rho_form_residual, run_delta_sweep, run_eps_sweep, select_test_functions,
    test_dictionary, weak_error, TestFunction,
};
