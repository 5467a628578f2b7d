//! Runs a small grid from TOML into a resumable results table, then writes
//! plot-ready panels.
//!
//! ```text
//! cargo run --release --example scenario_grid -- /tmp/grid-demo
//! ```

use std::path::PathBuf;

use bayes_crt::runner::{emit_plot_data, read_results, run_command, FigureSpec, RunOptions};

const CONFIG: &str = r#"
outcome = "continuous"
design = ["design1", "design2"]
effect = [0.0, 0.3, 0.6]
n_clusters = [20, 40]
cluster_size = 8
interims = 1
boundary = [0.95, 0.98]
icc = [0.1, 0.5]
reps = 200
seed = 99
"#;

fn main() -> bayes_crt::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bayes-crt-grid"));
    std::fs::create_dir_all(&out).map_err(|e| bayes_crt::Error::io(&out, e))?;
    let config = out.join("grid.toml");
    std::fs::write(&config, CONFIG).map_err(|e| bayes_crt::Error::io(&config, e))?;

    let first = run_command(&config, &out, &RunOptions::default())?;
    let again = run_command(&config, &out, &RunOptions::default())?;
    println!("first run wrote {} rows; second run wrote {}", first.written, again.written);

    let rows = read_results(&first.results_path)?;
    let figures = [
        FigureSpec::preset("fpr-vs-icc", None)?,
        FigureSpec::preset("power-vs-effect", None)?,
    ];
    for path in emit_plot_data(&rows, &figures, &out.join("plots"))? {
        println!("{}", path.display());
    }
    Ok(())
}
