//! Decision-boundary search for a target false positive rate.
//!
//! Random streams do not depend on the boundary, so each template is
//! simulated once with an unreachable boundary and every candidate `U` is
//! evaluated by replaying the recorded probability traces. The replayed
//! rate equals what [`crate::oc::estimate_oc`] reports at that `U`, and the
//! estimated FPR is exactly non-increasing in `U`.

use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::oc::{binomial_se, simulate_trials};
use crate::trial::TrialResult;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySearch {
    /// Evaluate exactly these boundaries.
    Candidates(Vec<f64>),
    /// Bisection on `[low, high]`, assuming FPR decreases in `U`.
    Bisection { low: f64, high: f64, iterations: usize },
}

impl Default for BoundarySearch {
    fn default() -> Self {
        BoundarySearch::Bisection {
            low: 0.5,
            high: 0.999,
            iterations: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub boundary: f64,
    /// Largest FPR over the templates.
    pub fpr: f64,
    pub mc_se: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Smallest evaluated boundary whose FPR is within `target + mc_se` for
    /// every template.
    pub recommended: f64,
    /// Every evaluated boundary, sorted by `U`.
    pub curve: Vec<CalibrationPoint>,
}

struct Traces {
    trials: Vec<Vec<TrialResult>>,
}

impl Traces {
    fn evaluate(&self, boundary: f64, target: f64) -> CalibrationPoint {
        let (fpr, mc_se) = self
            .trials
            .iter()
            .map(|trials| {
                let hits = trials.iter().filter(|t| t.replay(boundary).1).count();
                let rate = hits as f64 / trials.len() as f64;
                (rate, binomial_se(rate, trials.len() as u64))
            })
            .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
        CalibrationPoint {
            boundary,
            fpr,
            mc_se,
            passes: fpr <= target + mc_se,
        }
    }
}

/// Finds the smallest boundary keeping the false positive rate of every
/// template (each with zero true effect) within `target_fpr` plus one
/// Monte-Carlo standard error.
pub fn calibrate_boundary(
    templates: &[Scenario],
    target_fpr: f64,
    search: &BoundarySearch,
    reps: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Calibration> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::invalid(format!(
            "target false positive rate must lie in (0, 1), got {target_fpr}; no boundary below 1 guarantees a rate of 0"
        )));
    }
    if templates.is_empty() {
        return Err(Error::invalid("calibration needs at least one template scenario"));
    }
    if let Some(t) = templates.iter().find(|t| t.outcome.effect() != 0.0) {
        return Err(Error::invalid(format!(
            "calibration templates must have zero true effect, got {}",
            t.outcome.effect()
        )));
    }
    let trials = templates
        .iter()
        .map(|t| simulate_trials(&t.with_boundary(1.0)?, reps, master_seed, workers))
        .collect::<Result<Vec<_>>>()?;
    let traces = Traces { trials };

    let mut curve = Vec::new();
    let recommended = match search {
        BoundarySearch::Candidates(values) => {
            if values.is_empty() || values.iter().any(|u| !(*u > 0.0 && *u <= 1.0)) {
                return Err(Error::invalid("candidate boundaries must be a non-empty list in (0, 1]"));
            }
            curve.extend(values.iter().map(|&u| traces.evaluate(u, target_fpr)));
            curve.sort_by(|a, b| a.boundary.total_cmp(&b.boundary));
            curve.iter().find(|p| p.passes).map(|p| p.boundary)
        }
        &BoundarySearch::Bisection { low, high, iterations } => {
            if !(0.0 < low && low < high && high <= 1.0) {
                return Err(Error::invalid(format!("invalid bisection interval [{low}, {high}]")));
            }
            let lo_point = traces.evaluate(low, target_fpr);
            let hi_point = traces.evaluate(high, target_fpr);
            curve.extend([lo_point, hi_point]);
            if lo_point.passes {
                Some(low)
            } else if !hi_point.passes {
                None
            } else {
                let (mut lo, mut hi) = (low, high);
                for _ in 0..iterations {
                    let mid = 0.5 * (lo + hi);
                    let p = traces.evaluate(mid, target_fpr);
                    curve.push(p);
                    if p.passes {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                curve.sort_by(|a, b| a.boundary.total_cmp(&b.boundary));
                Some(hi)
            }
        }
    };
    match recommended {
        Some(recommended) => Ok(Calibration { recommended, curve }),
        None => {
            let best = curve
                .iter()
                .min_by(|a, b| a.fpr.total_cmp(&b.fpr))
                .expect("curve is non-empty");
            Err(Error::Unattainable {
                target: target_fpr,
                best_boundary: best.boundary,
                best_fpr: best.fpr,
            })
        }
    }
}

/// FPR of the worst template at each boundary in `boundaries`, by replay.
pub fn fpr_curve(templates: &[Scenario], boundaries: &[f64], reps: u64, master_seed: u64, workers: usize) -> Result<Vec<CalibrationPoint>> {
    let trials = templates
        .iter()
        .map(|t| simulate_trials(&t.with_boundary(1.0)?, reps, master_seed, workers))
        .collect::<Result<Vec<_>>>()?;
    let traces = Traces { trials };
    Ok(boundaries.iter().map(|&u| traces.evaluate(u, f64::NAN)).collect())
}
