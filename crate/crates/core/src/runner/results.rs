//! Append-only results table.
//!
//! One header row, then one row per completed scenario. Each row is
//! serialized in memory and written with a single `write_all` on a file
//! opened for appending. A row without its trailing newline can only come
//! from an interrupted write; it is cut off when the table is reopened.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::grid::RunSpec;
use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, AnalysisOptions, Design, DesignSpec, OutcomeKind, OutcomeSpec, PriorSpec, ProbabilityMode,
    RemainderPolicy, UpdateMode,
};
use crate::oc::OcEstimate;

pub const RESULTS_HEADER: [&str; 28] = [
    "fingerprint",
    "outcome",
    "design",
    "mu_c",
    "pi_c",
    "sigma_w2",
    "effect",
    "n_clusters",
    "cluster_size",
    "interims",
    "boundary",
    "icc",
    "reps",
    "seed",
    "update_mode",
    "remainder_policy",
    "prob_mode",
    "mc_samples",
    "grid_points",
    "prior_mean",
    "prior_var",
    "delta",
    "rejection_rate",
    "mc_se",
    "expected_clusters",
    "expected_participants",
    "stop_stage_counts",
    "wall_time_ms",
];

/// Number of leading columns that identify the scenario.
pub const SCENARIO_COLUMNS: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run: RunSpec,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub expected_clusters: f64,
    pub expected_participants: f64,
    pub stop_stage_counts: Vec<u64>,
    pub wall_time_ms: u64,
}

impl ResultRow {
    pub fn new(run: RunSpec, estimate: &OcEstimate, wall_time_ms: u64) -> Self {
        Self {
            run,
            rejection_rate: estimate.rejection_rate,
            mc_se: estimate.mc_se,
            expected_clusters: estimate.expected_clusters_per_arm,
            expected_participants: estimate.expected_participants_per_arm,
            stop_stage_counts: estimate.stop_stage_histogram.clone(),
            wall_time_ms,
        }
    }

    pub fn fingerprint(&self) -> String {
        self.run.fingerprint()
    }

    pub fn to_record(&self) -> Vec<String> {
        let mut record = scenario_record(&self.run);
        record.extend([
            self.rejection_rate.to_string(),
            self.mc_se.to_string(),
            self.expected_clusters.to_string(),
            self.expected_participants.to_string(),
            self.stop_stage_counts
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("|"),
            self.wall_time_ms.to_string(),
        ]);
        record
    }

    pub fn from_record(record: &csv::StringRecord) -> Result<Self> {
        if record.len() != RESULTS_HEADER.len() {
            return Err(Error::invalid(format!(
                "results row has {} columns, expected {}",
                record.len(),
                RESULTS_HEADER.len()
            )));
        }
        let fields: Vec<&str> = record.iter().collect();
        let run = parse_scenario_record(&fields[..SCENARIO_COLUMNS])?;
        let counts = fields[26]
            .split('|')
            .map(|s| parse::<u64>(s, "stop_stage_counts"))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            run,
            rejection_rate: parse(fields[22], "rejection_rate")?,
            mc_se: parse(fields[23], "mc_se")?,
            expected_clusters: parse(fields[24], "expected_clusters")?,
            expected_participants: parse(fields[25], "expected_participants")?,
            stop_stage_counts: counts,
            wall_time_ms: parse(fields[27], "wall_time_ms")?,
        })
    }
}

fn opt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// The scenario columns (`fingerprint` through `delta`) of a run.
pub fn scenario_record(run: &RunSpec) -> Vec<String> {
    let s = &run.scenario;
    let (mu_c, pi_c, sigma_w2) = match s.outcome {
        OutcomeSpec::Continuous { mu_c, sigma_w2, .. } => (mu_c, f64::NAN, sigma_w2),
        OutcomeSpec::Binary { pi_c, .. } => (f64::NAN, pi_c, f64::NAN),
    };
    let mc_samples = match s.analysis.probability {
        ProbabilityMode::Exact => String::new(),
        ProbabilityMode::MonteCarlo { samples } => samples.to_string(),
    };
    vec![
        run.fingerprint(),
        s.kind().to_string(),
        s.design.design.to_string(),
        opt(mu_c),
        opt(pi_c),
        opt(sigma_w2),
        s.outcome.effect().to_string(),
        s.design.n_clusters.to_string(),
        s.design.cluster_size.to_string(),
        s.design.interims.to_string(),
        s.design.boundary.to_string(),
        s.outcome.rho().to_string(),
        run.reps.to_string(),
        run.seed.to_string(),
        s.prior.update_mode.to_string(),
        s.design.remainder.to_string(),
        s.analysis.probability.as_str().to_string(),
        mc_samples,
        s.analysis.grid_points.to_string(),
        s.prior.mean.to_string(),
        s.prior.variance.to_string(),
        s.design.delta.to_string(),
    ]
}

fn parse<T: std::str::FromStr>(s: &str, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::invalid(format!("column {column}: cannot parse `{s}`: {e}")))
}

/// Inverse of [`scenario_record`]; the stored fingerprint must match.
pub fn parse_scenario_record(fields: &[&str]) -> Result<RunSpec> {
    if fields.len() != SCENARIO_COLUMNS {
        return Err(Error::invalid(format!("expected {SCENARIO_COLUMNS} scenario columns, got {}", fields.len())));
    }
    let kind: OutcomeKind = fields[1].parse()?;
    let effect = parse(fields[6], "effect")?;
    let rho = parse(fields[11], "icc")?;
    let outcome = match kind {
        OutcomeKind::Continuous => OutcomeSpec::Continuous {
            mu_c: parse(fields[3], "mu_c")?,
            effect,
            sigma_w2: parse(fields[5], "sigma_w2")?,
            rho,
        },
        OutcomeKind::Binary => OutcomeSpec::Binary {
            pi_c: parse(fields[4], "pi_c")?,
            effect,
            rho,
        },
    };
    let design = DesignSpec {
        design: fields[2].parse::<Design>()?,
        n_clusters: parse(fields[7], "n_clusters")?,
        cluster_size: parse(fields[8], "cluster_size")?,
        interims: parse(fields[9], "interims")?,
        boundary: parse(fields[10], "boundary")?,
        delta: parse(fields[21], "delta")?,
        remainder: fields[15].parse::<RemainderPolicy>()?,
    };
    let prior = PriorSpec {
        mean: parse(fields[19], "prior_mean")?,
        variance: parse(fields[20], "prior_var")?,
        update_mode: fields[14].parse::<UpdateMode>()?,
    };
    let probability = match fields[16] {
        "exact" => ProbabilityMode::Exact,
        "mc" => ProbabilityMode::MonteCarlo {
            samples: parse(fields[17], "mc_samples")?,
        },
        other => return Err(Error::invalid(format!("unknown prob_mode `{other}`"))),
    };
    let analysis = AnalysisOptions {
        probability,
        grid_points: parse(fields[18], "grid_points")?,
    };
    let run = RunSpec {
        scenario: validate_scenario(outcome, design, prior, analysis)?,
        reps: parse(fields[12], "reps")?,
        seed: parse(fields[13], "seed")?,
    };
    if run.fingerprint() != fields[0] {
        return Err(Error::invalid(format!(
            "fingerprint mismatch: stored {}, recomputed {}",
            fields[0],
            run.fingerprint()
        )));
    }
    Ok(run)
}

/// Reads every row of a results table. Later rows for the same fingerprint
/// supersede earlier ones.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    check_header(reader.headers()?, path)?;
    let mut latest: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<ResultRow> = Vec::new();
    for record in reader.records() {
        let row = ResultRow::from_record(&record?)?;
        match latest.get(&row.fingerprint()) {
            Some(&i) => rows[i] = row,
            None => {
                latest.insert(row.fingerprint(), rows.len());
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn check_header(header: &csv::StringRecord, path: &Path) -> Result<()> {
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::invalid(format!("{}: not a results table (unexpected header)", path.display())));
    }
    Ok(())
}

fn serialize(record: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(record)?;
    w.into_inner()
        .map_err(|e| Error::invalid(format!("serializing row: {e}")))
}

/// Single-writer handle on a results table.
pub struct ResultsStore {
    path: PathBuf,
    file: File,
    fingerprints: HashMap<String, usize>,
}

impl ResultsStore {
    /// Opens or creates the table, cutting off a torn final row if present.
    pub fn open(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io)?;
        let mut content = Vec::new();
        file.read_to_end(&mut content).map_err(io)?;

        if content.is_empty() {
            file.write_all(&serialize(&RESULTS_HEADER.map(String::from))?).map_err(io)?;
            file.sync_data().map_err(io)?;
        } else if content.last() != Some(&b'\n') {
            let keep = content.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            log::warn!("{}: dropping torn final row ({} bytes)", path.display(), content.len() - keep);
            file.set_len(keep as u64).map_err(io)?;
            if keep == 0 {
                file.write_all(&serialize(&RESULTS_HEADER.map(String::from))?).map_err(io)?;
            }
            file.sync_data().map_err(io)?;
        }

        let mut fingerprints = HashMap::new();
        for row in read_results(path)? {
            *fingerprints.entry(row.fingerprint()).or_default() += 1;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            fingerprints,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, fingerprint: &str) -> bool {
        self.fingerprints.contains_key(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprints.is_empty()
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        let bytes = serialize(&row.to_record())?;
        self.file.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        *self.fingerprints.entry(row.fingerprint()).or_default() += 1;
        Ok(())
    }
}
