use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bayes_crt::beta_binomial::{posterior_grid, prob_risk_diff_exceeds, BinaryArmData};
use bayes_crt::datagen::{sigma_b2_from_icc, DatasetWriter};
use bayes_crt::model::AnalysisOptions;
use bayes_crt::normal::{posterior_update, prob_superiority_exact, ClusterStats, NormalPosterior};
use bayes_crt::rng::Arm;
use bayes_crt::runner::{
    calibrate_boundary, emit_plot_data, expand_grid, load_config, parse_figures, read_results, resolve_workers,
    run_command, BoundarySearch, FigureSpec, RunOptions, WORKERS_ENV,
};
use bayes_crt::trial::{run_trial_with_data, write_trace, TrialData};
use bayes_crt::{Error, Result};

#[derive(Parser)]
#[command(name = "bayes-crt", version, about = "Bayesian adaptive cluster-randomized trial simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a grid config and append to OUT/results.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Recompute scenarios that already have a row.
        #[arg(long)]
        force: bool,
    },
    /// Search the smallest boundary meeting a target false positive rate.
    Calibrate {
        /// Grid config; scenarios with zero effect are the templates.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target: f64,
        /// Explicit candidates; otherwise bisection on [low, high].
        #[arg(long, value_delimiter = ',')]
        boundaries: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        low: f64,
        #[arg(long, default_value_t = 0.999)]
        high: f64,
        #[arg(long, default_value_t = 6)]
        iterations: usize,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Turn a results table into per-panel plot files.
    PlotData {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Built-in figure names (repeatable).
        #[arg(long)]
        preset: Vec<String>,
        /// TOML file with [[figure]] tables.
        #[arg(long)]
        figures: Option<PathBuf>,
        /// Reference line for presets (default 0.05 for FPR, 0.8 for power).
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Posterior summary of one dumped dataset.
    InspectPosterior {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        outcome: OutcomeArg,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        #[arg(long)]
        icc: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_w2: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        prior_mean: f64,
        #[arg(long, default_value_t = 100.0)]
        prior_var: f64,
        #[arg(long, default_value_t = AnalysisOptions::DEFAULT_GRID_POINTS)]
        grid_points: usize,
    },
    /// Dump the simulated datasets and look-by-look traces of one scenario.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Position of the scenario in the expanded grid.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 10)]
        reps: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Continuous,
    Binary,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out,
            workers,
            seed,
            force,
        } => {
            let summary = run_command(&config, &out, &RunOptions { workers, seed, force })?;
            println!(
                "{} scenarios: {} written, {} already present, {} invalid combinations skipped -> {}",
                summary.scenarios,
                summary.written,
                summary.already_done,
                summary.invalid,
                summary.results_path.display()
            );
            Ok(())
        }
        Command::Calibrate {
            config,
            out,
            target,
            boundaries,
            low,
            high,
            iterations,
            workers,
            seed,
        } => {
            let grid = load_config(&config)?;
            let seed = seed.unwrap_or(grid.seed);
            let mut templates = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for run in expand_grid(&grid)?.runs {
                if run.scenario.outcome.effect() != 0.0 {
                    continue;
                }
                let template = run.scenario.with_boundary(1.0)?;
                if seen.insert(template.fingerprint()) {
                    templates.push(template);
                }
            }
            let search = if boundaries.is_empty() {
                BoundarySearch::Bisection { low, high, iterations }
            } else {
                BoundarySearch::Candidates(boundaries)
            };
            let calibration = calibrate_boundary(&templates, target, &search, grid.reps, seed, resolve_workers(workers))?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let path = out.join("calibration.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["boundary", "fpr", "mc_se", "passes"])?;
            for p in &calibration.curve {
                w.write_record(&[p.boundary.to_string(), p.fpr.to_string(), p.mc_se.to_string(), p.passes.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            println!(
                "recommended U = {} over {} templates (curve: {})",
                calibration.recommended,
                templates.len(),
                path.display()
            );
            Ok(())
        }
        Command::PlotData {
            results,
            out,
            preset,
            figures,
            reference,
        } => {
            let mut specs = preset
                .iter()
                .map(|name| FigureSpec::preset(name, reference))
                .collect::<Result<Vec<_>>>()?;
            if let Some(path) = figures {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                specs.extend(parse_figures(&text)?);
            }
            let rows = read_results(&results)?;
            let written = emit_plot_data(&rows, &specs, &out)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::InspectPosterior {
            dataset,
            outcome,
            replication,
            icc,
            sigma_w2,
            delta,
            prior_mean,
            prior_var,
            grid_points,
        } => {
            let arms = read_dataset(&dataset, replication)?;
            match outcome {
                OutcomeArg::Continuous => {
                    let sigma_b2 = sigma_b2_from_icc(icc, sigma_w2)?;
                    let prior = NormalPosterior::new(prior_mean, prior_var)?;
                    let post = |arm: Arm| -> Result<NormalPosterior> {
                        let mut stats = ClusterStats::new(sigma_w2, sigma_b2);
                        for values in arms.get(&arm).into_iter().flat_map(|c| c.values()) {
                            stats.push(values.len(), values.iter().sum());
                        }
                        posterior_update(prior, &stats)
                    };
                    let (c, t) = (post(Arm::Control)?, post(Arm::Treatment)?);
                    println!("control   mean {:.6} variance {:.6}", c.mean, c.variance);
                    println!("treatment mean {:.6} variance {:.6}", t.mean, t.variance);
                    println!("P(mu_c - mu_t > {delta}) = {:.6}", prob_superiority_exact(c, t, delta));
                }
                OutcomeArg::Binary => {
                    let v = BinaryArmData::precision_for_icc(icc);
                    let post = |arm: Arm| {
                        let clusters = arms
                            .get(&arm)
                            .into_iter()
                            .flat_map(|c| c.values())
                            .map(|values| (values.iter().filter(|&&y| y != 0.0).count() as u32, values.len() as u32))
                            .collect();
                        posterior_grid(&BinaryArmData::new(clusters, v)?, grid_points)
                    };
                    let (c, t) = (post(Arm::Control)?, post(Arm::Treatment)?);
                    println!("control   mean {:.6} variance {:.6}", c.mean(), c.variance());
                    println!("treatment mean {:.6} variance {:.6}", t.mean(), t.variance());
                    println!("P(pi_t - pi_c > {delta}) = {:.6}", prob_risk_diff_exceeds(&t, &c, delta)?);
                }
            }
            Ok(())
        }
        Command::Generate {
            config,
            out,
            index,
            reps,
            seed,
        } => {
            let grid = load_config(&config)?;
            let seed = seed.unwrap_or(grid.seed);
            let runs = expand_grid(&grid)?.runs;
            let run = runs.get(index).ok_or_else(|| {
                Error::invalid(format!("scenario index {index} out of range ({} scenarios)", runs.len()))
            })?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let data_path = out.join("dataset.csv");
            let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
            let mut writer = DatasetWriter::new(file)?;
            let mut trials = Vec::new();
            for rep in 0..reps {
                let (result, data) = run_trial_with_data(&run.scenario, seed, rep)?;
                match data {
                    TrialData::Continuous { control, treatment } => {
                        writer.write_continuous(rep, Arm::Control, &control)?;
                        writer.write_continuous(rep, Arm::Treatment, &treatment)?;
                    }
                    TrialData::Binary { control, treatment } => {
                        writer.write_binary(rep, Arm::Control, &control)?;
                        writer.write_binary(rep, Arm::Treatment, &treatment)?;
                    }
                }
                trials.push(result);
            }
            writer.finish()?;
            let trace_path = out.join("trace.csv");
            write_trace(File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?, &trials)?;
            println!("{}", run.scenario.canonical_text());
            println!("{}\n{}", data_path.display(), trace_path.display());
            Ok(())
        }
    }
}

/// Observations of one replication keyed by arm, then cluster index.
fn read_dataset(path: &Path, replication: u64) -> Result<BTreeMap<Arm, BTreeMap<u32, Vec<f64>>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut arms: BTreeMap<Arm, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| Error::invalid(format!("{}: bad {what} `{}`", path.display(), record.as_slice()));
        if field(0).parse::<u64>().map_err(|_| bad("replication"))? != replication {
            continue;
        }
        let arm = match field(1) {
            "control" => Arm::Control,
            "treatment" => Arm::Treatment,
            _ => return Err(bad("arm")),
        };
        let cluster: u32 = field(2).parse().map_err(|_| bad("cluster"))?;
        let value: f64 = field(4).parse().map_err(|_| bad("value"))?;
        arms.entry(arm).or_default().entry(cluster).or_default().push(value);
    }
    if Arm::BOTH.iter().any(|a| !arms.contains_key(a)) {
        return Err(Error::invalid(format!(
            "{}: replication {replication} lacks data for both arms",
            path.display()
        )));
    }
    Ok(arms)
}
