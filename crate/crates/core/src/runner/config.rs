//! TOML scenario-grid configuration.
//!
//! Every key takes either a single value or a list; lists are expanded as a
//! Cartesian product by [`super::grid::expand_grid`].
//!
//! ```toml
//! outcome = "continuous"
//! n_clusters = [20, 40, 60]
//! effect = [0.0, 0.5]
//! cluster_size = 8
//! interims = 1
//! boundary = [0.95, 0.98]
//! icc = [0.2, 0.5, 0.8]
//! reps = 500
//! seed = 2024
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{AnalysisOptions, Design, OutcomeKind, ProbabilityMode, RemainderPolicy, UpdateMode};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ProbModeKey {
    #[default]
    Exact,
    Mc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    outcome: OneOrMany<OutcomeKind>,
    design: Option<OneOrMany<Design>>,
    mu_c: Option<OneOrMany<f64>>,
    pi_c: Option<OneOrMany<f64>>,
    sigma_w2: Option<OneOrMany<f64>>,
    effect: OneOrMany<f64>,
    n_clusters: OneOrMany<usize>,
    cluster_size: OneOrMany<usize>,
    interims: OneOrMany<usize>,
    boundary: OneOrMany<f64>,
    icc: OneOrMany<f64>,
    reps: Option<u64>,
    seed: Option<u64>,
    update_mode: Option<UpdateMode>,
    remainder_policy: Option<RemainderPolicy>,
    prob_mode: Option<ProbModeKey>,
    mc_samples: Option<usize>,
    grid_points: Option<usize>,
    prior_mean: Option<f64>,
    prior_var: Option<f64>,
    delta: Option<f64>,
}

/// Lists of values for every scenario field plus run-wide settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub outcome: Vec<OutcomeKind>,
    pub design: Vec<Design>,
    pub mu_c: Vec<f64>,
    pub pi_c: Vec<f64>,
    pub sigma_w2: Vec<f64>,
    pub effect: Vec<f64>,
    pub n_clusters: Vec<usize>,
    pub cluster_size: Vec<usize>,
    pub interims: Vec<usize>,
    pub boundary: Vec<f64>,
    pub icc: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
    pub update_mode: UpdateMode,
    pub remainder_policy: RemainderPolicy,
    pub probability: ProbabilityMode,
    pub grid_points: usize,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub delta: f64,
}

pub const DEFAULT_REPS: u64 = 500;
pub const DEFAULT_SEED: u64 = 20_240_101;

impl ScenarioGrid {
    /// A grid with one value per field, for programmatic construction.
    pub fn single(outcome: OutcomeKind) -> Self {
        Self {
            outcome: vec![outcome],
            design: vec![Design::Design1],
            mu_c: vec![0.0],
            pi_c: vec![0.35],
            sigma_w2: vec![1.0],
            effect: vec![0.0],
            n_clusters: vec![20],
            cluster_size: vec![8],
            interims: vec![1],
            boundary: vec![0.95],
            icc: vec![if outcome == OutcomeKind::Binary { 0.05 } else { 0.2 }],
            reps: DEFAULT_REPS,
            seed: DEFAULT_SEED,
            update_mode: UpdateMode::default(),
            remainder_policy: RemainderPolicy::default(),
            probability: ProbabilityMode::Exact,
            grid_points: AnalysisOptions::DEFAULT_GRID_POINTS,
            prior_mean: 0.0,
            prior_var: 100.0,
            delta: 0.0,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

fn config_error(origin: &str, text: &str, offset: Option<usize>, message: impl Into<String>) -> Error {
    let (line, column) = offset.map_or((0, 0), |o| line_col(text, o));
    Error::Config {
        path: origin.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses a grid from TOML text; `origin` names the source in diagnostics.
pub fn parse_config(text: &str, origin: &str) -> Result<ScenarioGrid> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| config_error(origin, text, e.span().map(|s| s.start), e.message().to_string()))?;

    let key_offset = |key: &str| {
        text.lines()
            .scan(0usize, |pos, line| {
                let start = *pos;
                *pos += line.len() + 1;
                Some((start, line))
            })
            .find(|(_, line)| line.trim_start().starts_with(key))
            .map(|(start, _)| start)
    };
    let fail = |key: &str, msg: String| config_error(origin, text, key_offset(key), format!("{key}: {msg}"));

    let outcome: Vec<OutcomeKind> = raw.outcome.into();
    let pi_c: Vec<f64> = raw.pi_c.map(Into::into).unwrap_or_default();
    if outcome.contains(&OutcomeKind::Binary) && pi_c.is_empty() {
        return Err(fail("outcome", "binary outcomes need `pi_c`".into()));
    }
    let probability = match raw.prob_mode.unwrap_or_default() {
        ProbModeKey::Exact => ProbabilityMode::Exact,
        ProbModeKey::Mc => ProbabilityMode::MonteCarlo {
            samples: raw.mc_samples.unwrap_or(ProbabilityMode::DEFAULT_MC_SAMPLES),
        },
    };
    let grid = ScenarioGrid {
        outcome,
        design: raw
            .design
            .map(Into::into)
            .unwrap_or_else(|| vec![Design::Design1, Design::Design2]),
        mu_c: raw.mu_c.map(Into::into).unwrap_or_else(|| vec![0.0]),
        pi_c,
        sigma_w2: raw.sigma_w2.map(Into::into).unwrap_or_else(|| vec![1.0]),
        effect: raw.effect.into(),
        n_clusters: raw.n_clusters.into(),
        cluster_size: raw.cluster_size.into(),
        interims: raw.interims.into(),
        boundary: raw.boundary.into(),
        icc: raw.icc.into(),
        reps: raw.reps.unwrap_or(DEFAULT_REPS),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        update_mode: raw.update_mode.unwrap_or_default(),
        remainder_policy: raw.remainder_policy.unwrap_or_default(),
        probability,
        grid_points: raw.grid_points.unwrap_or(AnalysisOptions::DEFAULT_GRID_POINTS),
        prior_mean: raw.prior_mean.unwrap_or(0.0),
        prior_var: raw.prior_var.unwrap_or(100.0),
        delta: raw.delta.unwrap_or(0.0),
    };

    let empties = [
        ("outcome", grid.outcome.is_empty()),
        ("design", grid.design.is_empty()),
        ("mu_c", grid.mu_c.is_empty()),
        ("sigma_w2", grid.sigma_w2.is_empty()),
        ("effect", grid.effect.is_empty()),
        ("n_clusters", grid.n_clusters.is_empty()),
        ("cluster_size", grid.cluster_size.is_empty()),
        ("interims", grid.interims.is_empty()),
        ("boundary", grid.boundary.is_empty()),
        ("icc", grid.icc.is_empty()),
    ];
    if let Some((key, _)) = empties.iter().find(|(_, empty)| *empty) {
        return Err(fail(key, "list must not be empty".into()));
    }
    if grid.reps == 0 {
        return Err(fail("reps", "must be at least 1".into()));
    }
    Ok(grid)
}

pub fn load_config(path: &Path) -> Result<ScenarioGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_and_lists() {
        let g = parse_config(
            r#"
outcome = "binary"
pi_c = [0.25, 0.35]
effect = [0.0, 0.1]
n_clusters = 20
cluster_size = 8
interims = [1, 3]
boundary = 0.95
icc = [0.05, 0.1]
prob_mode = "exact"
"#,
            "inline",
        )
        .unwrap();
        assert_eq!(g.outcome, vec![OutcomeKind::Binary]);
        assert_eq!(g.design, vec![Design::Design1, Design::Design2]);
        assert_eq!(g.interims, vec![1, 3]);
        assert_eq!(g.reps, DEFAULT_REPS);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let text = "outcome = \"continuous\"\neffect = 0.0\nn_clusters = \"twenty\"\ncluster_size = 8\ninterims = 1\nboundary = 0.95\nicc = 0.2\n";
        match parse_config(text, "grid.toml").unwrap_err() {
            Error::Config { path, line, .. } => {
                assert_eq!(path, "grid.toml");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }

        let unknown = "outcome = \"continuous\"\neffect = 0.0\nn_clusters = 20\ncluster_size = 8\ninterims = 1\nboundary = 0.95\nicc = 0.2\nrho = 0.3\n";
        let err = parse_config(unknown, "grid.toml").unwrap_err().to_string();
        assert!(err.contains("rho"), "{err}");

        let missing_pi = "outcome = \"binary\"\neffect = 0.0\nn_clusters = 20\ncluster_size = 8\ninterims = 1\nboundary = 0.95\nicc = 0.05\n";
        match parse_config(missing_pi, "grid.toml").unwrap_err() {
            Error::Config { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("pi_c"));
            }
            other => panic!("{other:?}"),
        }

        let empty = "outcome = \"continuous\"\neffect = []\nn_clusters = 20\ncluster_size = 8\ninterims = 1\nboundary = 0.95\nicc = 0.2\n";
        match parse_config(empty, "grid.toml").unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mc_mode_picks_up_samples() {
        let g = parse_config(
            "outcome = \"continuous\"\neffect = 0.0\nn_clusters = 20\ncluster_size = 8\ninterims = 1\nboundary = 0.95\nicc = 0.2\nprob_mode = \"mc\"\nmc_samples = 500\n",
            "inline",
        )
        .unwrap();
        assert_eq!(g.probability, ProbabilityMode::MonteCarlo { samples: 500 });
    }
}
