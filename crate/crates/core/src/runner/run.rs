use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::load_config;
use super::grid::expand_grid;
use super::results::{ResultRow, ResultsStore};
use crate::error::{Error, Result};
use crate::oc::estimate_oc;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "BAYES_CRT_WORKERS";

pub const RESULTS_FILE: &str = "results.csv";

/// Explicit value, else `BAYES_CRT_WORKERS`, else available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    /// Overrides the configured master seed.
    pub seed: Option<u64>,
    /// Recompute scenarios that already have a row; the new row supersedes
    /// the old one when the table is read.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub results_path: PathBuf,
    pub scenarios: usize,
    pub written: usize,
    pub already_done: usize,
    pub invalid: usize,
}

/// Expands the configured grid and appends one results row per scenario
/// not yet present in `out_dir/results.csv`.
pub fn run_command(config: &Path, out_dir: &Path, options: &RunOptions) -> Result<RunSummary> {
    let mut grid = load_config(config)?;
    if let Some(seed) = options.seed {
        grid.seed = seed;
    }
    let expansion = expand_grid(&grid)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results_path = out_dir.join(RESULTS_FILE);
    let mut store = ResultsStore::open(&results_path)?;
    let workers = resolve_workers(options.workers);

    let total = expansion.runs.len();
    let (mut written, mut already_done) = (0, 0);
    for (i, run) in expansion.runs.into_iter().enumerate() {
        if !options.force && store.contains(&run.fingerprint()) {
            already_done += 1;
            continue;
        }
        let started = Instant::now();
        let estimate = estimate_oc(&run.scenario, run.reps, run.seed, workers)?;
        let elapsed = started.elapsed().as_millis() as u64;
        log::info!(
            "[{}/{}] {} rejection rate {:.4} ({} ms)",
            i + 1,
            total,
            run.fingerprint(),
            estimate.rejection_rate,
            elapsed
        );
        store.append(&ResultRow::new(run, &estimate, elapsed))?;
        written += 1;
    }
    Ok(RunSummary {
        results_path,
        scenarios: total,
        written,
        already_done,
        invalid: expansion.skipped.len(),
    })
}
