//! Operating characteristics by replicated simulation.
//!
//! Replication `i` always uses the streams derived from
//! `(master_seed, scenario stream key, i)`, so every estimate is identical
//! for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::trial::{run_trial, TrialResult};

#[derive(Debug, Clone, PartialEq)]
pub struct OcEstimate {
    /// Share of replications declaring efficacy: the false positive rate
    /// when the true effect is zero, power otherwise.
    pub rejection_rate: f64,
    /// Binomial Monte-Carlo standard error of `rejection_rate`.
    pub mc_se: f64,
    pub rejections: u64,
    /// Number of trials ending at each look.
    pub stop_stage_histogram: Vec<u64>,
    /// Mean participants enrolled per arm (early stops enroll less).
    pub expected_participants_per_arm: f64,
    pub expected_clusters_per_arm: f64,
    pub reps: u64,
    pub fingerprint: String,
}

impl OcEstimate {
    pub fn from_trials(scenario: &Scenario, trials: &[TrialResult]) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::invalid("no replications to summarize"));
        }
        let reps = trials.len() as u64;
        let mut histogram = vec![0u64; scenario.schedule.len()];
        let (mut rejections, mut participants, mut clusters) = (0u64, 0u64, 0u64);
        for t in trials {
            histogram[t.stopped_stage - 1] += 1;
            rejections += u64::from(t.efficacy_declared);
            participants += t.participants_per_arm() as u64;
            clusters += t.clusters_per_arm() as u64;
        }
        let rate = rejections as f64 / reps as f64;
        Ok(Self {
            rejection_rate: rate,
            mc_se: binomial_se(rate, reps),
            rejections,
            stop_stage_histogram: histogram,
            expected_participants_per_arm: participants as f64 / reps as f64,
            expected_clusters_per_arm: clusters as f64 / reps as f64,
            reps,
            fingerprint: scenario.fingerprint(),
        })
    }
}

pub fn binomial_se(p: f64, reps: u64) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

/// Runs replications `0..reps` in parallel and returns them in index order.
pub fn simulate_trials(scenario: &Scenario, reps: u64, master_seed: u64, workers: usize) -> Result<Vec<TrialResult>> {
    if reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    pool(workers)?.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|i| {
                run_trial(scenario, master_seed, i).map_err(|e| Error::Replication {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

pub fn estimate_oc(scenario: &Scenario, reps: u64, master_seed: u64, workers: usize) -> Result<OcEstimate> {
    let trials = simulate_trials(scenario, reps, master_seed, workers)?;
    OcEstimate::from_trials(scenario, &trials)
}

/// Paired estimates for two scenarios that differ only in design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignComparison {
    pub first: OcEstimate,
    pub second: OcEstimate,
    /// `second.rejection_rate - first.rejection_rate`.
    pub difference: f64,
    /// Standard error of the paired difference.
    pub se: f64,
}

/// Runs both scenarios on common random numbers: replication `i` of either
/// design sees the same cluster effects and participant outcomes.
pub fn compare_designs(
    first: &Scenario,
    second: &Scenario,
    reps: u64,
    master_seed: u64,
    workers: usize,
) -> Result<DesignComparison> {
    if &second.with_design(first.design.design)? != first {
        return Err(Error::invalid("design comparison needs scenarios that differ only in design"));
    }
    let a = simulate_trials(first, reps, master_seed, workers)?;
    let b = simulate_trials(second, reps, master_seed, workers)?;
    let diffs: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| f64::from(u8::from(y.efficacy_declared)) - f64::from(u8::from(x.efficacy_declared)))
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(DesignComparison {
        first: OcEstimate::from_trials(first, &a)?,
        second: OcEstimate::from_trials(second, &b)?,
        difference: mean,
        se: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Design, DesignSpec, OutcomeSpec};

    fn scenario(design: Design, effect: f64, boundary: f64) -> Scenario {
        Scenario::new(
            OutcomeSpec::Continuous { mu_c: 0.0, effect, sigma_w2: 1.0, rho: 0.2 },
            DesignSpec::new(design, 20, 8, 1, boundary),
        )
        .unwrap()
    }

    #[test]
    fn unreachable_boundary_never_rejects() {
        let est = estimate_oc(&scenario(Design::Design1, 0.0, 1.0), 50, 1, 2).unwrap();
        assert_eq!(est.rejection_rate, 0.0);
        assert_eq!(est.stop_stage_histogram, vec![0, 50]);
        assert_eq!(est.expected_clusters_per_arm, 20.0);
        assert_eq!(est.expected_participants_per_arm, 160.0);
    }

    #[test]
    fn histogram_and_rate_are_consistent() {
        let est = estimate_oc(&scenario(Design::Design2, 0.4, 0.95), 100, 2, 3).unwrap();
        assert_eq!(est.stop_stage_histogram.iter().sum::<u64>(), 100);
        assert_eq!(est.rejection_rate * 100.0, est.rejections as f64);
        assert!((est.mc_se - binomial_se(est.rejection_rate, 100)).abs() < 1e-15);
    }

    #[test]
    fn identical_designs_compare_to_zero() {
        let s = scenario(Design::Design1, 0.3, 0.95);
        let c = compare_designs(&s, &s, 60, 4, 2).unwrap();
        assert_eq!(c.difference, 0.0);
        assert_eq!(c.se, 0.0);
        assert_eq!(c.first, c.second);
    }

    #[test]
    fn mismatched_comparison_rejected() {
        let a = scenario(Design::Design1, 0.3, 0.95);
        let b = scenario(Design::Design2, 0.3, 0.98);
        assert!(compare_designs(&a, &b, 10, 0, 1).is_err());
    }

    #[test]
    fn zero_reps_rejected() {
        assert!(estimate_oc(&scenario(Design::Design1, 0.0, 0.95), 0, 0, 1).is_err());
    }
}
