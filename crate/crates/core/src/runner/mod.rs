//! Grid configuration, batch execution with a resumable results table,
//! boundary calibration and plot-data emission.

pub mod calibrate;
pub mod config;
pub mod grid;
pub mod plot;
pub mod results;
pub mod run;

pub use calibrate::{calibrate_boundary, fpr_curve, BoundarySearch, Calibration, CalibrationPoint};
pub use config::{load_config, parse_config, ScenarioGrid};
pub use grid::{expand_grid, Expansion, RunSpec};
pub use plot::{emit_plot_data, parse_figures, FigureSpec};
pub use results::{read_results, ResultRow, ResultsStore, RESULTS_HEADER};
pub use run::{resolve_workers, run_command, RunOptions, RunSummary, WORKERS_ENV};
