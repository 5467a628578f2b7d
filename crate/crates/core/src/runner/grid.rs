use sha2::{Digest, Sha256};

use super::config::ScenarioGrid;
use crate::error::{Error, Result};
use crate::model::{validate_scenario, AnalysisOptions, DesignSpec, OutcomeKind, OutcomeSpec, PriorSpec, Scenario};

/// A scenario together with its replication count and master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scenario: Scenario,
    pub reps: u64,
    pub seed: u64,
}

impl RunSpec {
    /// Stable hash over every scenario field plus `reps` and `seed`.
    pub fn fingerprint(&self) -> String {
        let text = format!("{};reps={};seed={}", self.scenario.canonical_text(), self.reps, self.seed);
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub runs: Vec<RunSpec>,
    /// Human-readable reasons for every skipped combination.
    pub skipped: Vec<String>,
}

/// Cartesian expansion in declared field order (outcome, design, mu_c, pi_c,
/// sigma_w2, effect, n_clusters, cluster_size, interims, boundary, icc),
/// each list in the order given. Invalid combinations are skipped and logged.
pub fn expand_grid(grid: &ScenarioGrid) -> Result<Expansion> {
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    let prior = PriorSpec {
        mean: grid.prior_mean,
        variance: grid.prior_var,
        update_mode: grid.update_mode,
    };
    let analysis = AnalysisOptions {
        probability: grid.probability,
        grid_points: grid.grid_points,
    };

    for &kind in &grid.outcome {
        // (mu_c, pi_c, sigma_w2) combinations relevant to this outcome kind.
        let params: Vec<(f64, f64, f64)> = match kind {
            OutcomeKind::Continuous => grid
                .mu_c
                .iter()
                .flat_map(|&mu| grid.sigma_w2.iter().map(move |&sw| (mu, f64::NAN, sw)))
                .collect(),
            OutcomeKind::Binary => grid.pi_c.iter().map(|&pi| (f64::NAN, pi, f64::NAN)).collect(),
        };
        for &design in &grid.design {
            for &(mu_c, pi_c, sigma_w2) in &params {
                for &effect in &grid.effect {
                    for &n in &grid.n_clusters {
                        for &m in &grid.cluster_size {
                            for &k in &grid.interims {
                                for &u in &grid.boundary {
                                    for &rho in &grid.icc {
                                        let outcome = match kind {
                                            OutcomeKind::Continuous => OutcomeSpec::Continuous { mu_c, effect, sigma_w2, rho },
                                            OutcomeKind::Binary => OutcomeSpec::Binary { pi_c, effect, rho },
                                        };
                                        let spec = DesignSpec {
                                            design,
                                            n_clusters: n,
                                            cluster_size: m,
                                            interims: k,
                                            boundary: u,
                                            delta: grid.delta,
                                            remainder: grid.remainder_policy,
                                        };
                                        match validate_scenario(outcome, spec, prior, analysis) {
                                            Ok(scenario) => runs.push(RunSpec {
                                                scenario,
                                                reps: grid.reps,
                                                seed: grid.seed,
                                            }),
                                            Err(e) => {
                                                let reason = format!("{outcome:?} {spec:?}: {e}");
                                                log::info!("skipping {reason}");
                                                skipped.push(reason);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(Expansion { runs, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Design;

    #[test]
    fn single_values_give_one_scenario() {
        let e = expand_grid(&ScenarioGrid::single(OutcomeKind::Continuous)).unwrap();
        assert_eq!(e.runs.len(), 1);
        assert!(e.skipped.is_empty());
    }

    #[test]
    fn continuous_single_interim_table_grid() {
        let mut g = ScenarioGrid::single(OutcomeKind::Continuous);
        g.n_clusters = vec![20, 40, 60];
        g.effect = (0..10).map(|i| f64::from(i) / 10.0).collect();
        g.boundary = vec![0.95, 0.98];
        g.icc = (1..10).map(|i| f64::from(i) / 10.0).collect();
        let e = expand_grid(&g).unwrap();
        assert_eq!(e.runs.len(), 540);
        // lexicographic: effect varies slower than n, which is slower than icc
        assert_eq!(e.runs[1].scenario.outcome.rho(), 0.2);
        assert_eq!(e.runs[9].scenario.design.boundary, 0.98);
        let fps: std::collections::HashSet<_> = e.runs.iter().map(RunSpec::fingerprint).collect();
        assert_eq!(fps.len(), 540);
    }

    #[test]
    fn binary_range_filtering() {
        let mut g = ScenarioGrid::single(OutcomeKind::Binary);
        g.pi_c = vec![0.45];
        g.effect = vec![0.0, 0.1, 0.2, 0.3];
        assert_eq!(expand_grid(&g).unwrap().runs.len(), 4);

        g.pi_c = vec![0.9];
        g.effect = vec![0.0, 0.2];
        let e = expand_grid(&g).unwrap();
        assert_eq!(e.runs.len(), 1);
        assert_eq!(e.skipped.len(), 1);

        g.effect = vec![0.2];
        assert!(matches!(expand_grid(&g), Err(Error::EmptyGrid)));
    }

    #[test]
    fn design_list_multiplies() {
        let mut g = ScenarioGrid::single(OutcomeKind::Continuous);
        g.design = vec![Design::Design1, Design::Design2];
        g.interims = vec![1, 2, 3];
        assert_eq!(expand_grid(&g).unwrap().runs.len(), 6);
    }
}
