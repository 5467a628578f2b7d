//! Posterior of an arm's population risk under the beta-binomial cluster
//! model with known precision `v` and a uniform prior.
//!
//! Each cluster's event count is marginally beta-binomial with parameters
//! `(m_j, pi v, (1 - pi) v)`, so the posterior of `pi` is one-dimensional
//! and is evaluated on a fixed grid. The density is taken as piecewise
//! constant on `G` equal cells of `(0, 1)`, with values at the cell
//! midpoints; the CDF is then piecewise linear and its integral piecewise
//! quadratic, which makes the risk-difference probability an exact sum
//! over cells. A random-walk Metropolis sampler on `logit(pi)` provides an
//! independent check.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Event counts of one arm plus the known precision.
///
/// `v = f64::INFINITY` is the no-clustering limit (`rho = 0`), where every
/// cluster shares the arm risk and the likelihood is binomial.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryArmData {
    /// `(events, size)` per cluster.
    pub clusters: Vec<(u32, u32)>,
    pub v: f64,
}

impl BinaryArmData {
    pub fn new(clusters: Vec<(u32, u32)>, v: f64) -> Result<Self> {
        if !(v > 0.0) || v.is_nan() {
            return Err(Error::invalid(format!("beta precision must be > 0, got {v}")));
        }
        if let Some(&(r, m)) = clusters.iter().find(|&&(r, m)| r > m) {
            return Err(Error::invalid(format!("cluster has {r} events out of {m}")));
        }
        Ok(Self { clusters, v })
    }

    /// Precision for a given ICC, with `rho == 0` mapped to the binomial limit.
    pub fn precision_for_icc(rho: f64) -> f64 {
        crate::datagen::beta_precision(rho).unwrap_or(f64::INFINITY)
    }

    fn distinct(&self) -> Vec<((u32, u32), f64)> {
        let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for &c in &self.clusters {
            *counts.entry(c).or_default() += 1;
        }
        counts.into_iter().map(|(k, n)| (k, f64::from(n))).collect()
    }

    /// Swaps events and non-events in every cluster.
    pub fn mirrored(&self) -> Self {
        Self {
            clusters: self.clusters.iter().map(|&(r, m)| (m - r, m)).collect(),
            v: self.v,
        }
    }
}

fn ln_choose(m: u32, r: u32) -> f64 {
    statrs::function::factorial::ln_binomial(u64::from(m), u64::from(r))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log marginal likelihood of the arm's counts at population risk `pi`,
/// summed over clusters, via log-gamma.
pub fn log_marginal_likelihood(pi: f64, data: &BinaryArmData) -> f64 {
    if !(pi > 0.0 && pi < 1.0) {
        return f64::NAN;
    }
    let v = data.v;
    data.distinct()
        .into_iter()
        .map(|((r, m), n)| {
            let (r_f, m_f) = (f64::from(r), f64::from(m));
            let term = if v.is_infinite() {
                r_f * pi.ln() + (m_f - r_f) * (1.0 - pi).ln()
            } else {
                let (a, b) = (pi * v, (1.0 - pi) * v);
                ln_beta(r_f + a, m_f - r_f + b) - ln_beta(a, b)
            };
            n * (ln_choose(m, r) + term)
        })
        .sum()
}

/// Fast evaluation of the same log-likelihood on many points, using
/// `B(r + a, s + b) / B(a, b) = a^(r) b^(s) / (a + b)^(r + s)` with rising
/// factorials, so each point costs `O(max cluster size)` logarithms.
struct RisingFactorialLikelihood {
    distinct: Vec<((u32, u32), f64)>,
    v: f64,
    max_size: usize,
    constant: f64,
}

impl RisingFactorialLikelihood {
    fn new(data: &BinaryArmData) -> Self {
        let distinct = data.distinct();
        let max_size = distinct.iter().map(|&((_, m), _)| m as usize).max().unwrap_or(0);
        let v = data.v;
        let constant = distinct
            .iter()
            .map(|&((r, m), n)| {
                let denom: f64 = if v.is_infinite() {
                    0.0
                } else {
                    (0..m).map(|i| (v + f64::from(i)).ln()).sum()
                };
                n * (ln_choose(m, r) - denom)
            })
            .sum();
        Self {
            distinct,
            v,
            max_size,
            constant,
        }
    }

    fn eval(&self, pi: f64, la: &mut Vec<f64>, lb: &mut Vec<f64>) -> f64 {
        if self.v.is_infinite() {
            let (lp, lq) = (pi.ln(), (1.0 - pi).ln());
            return self.constant
                + self
                    .distinct
                    .iter()
                    .map(|&((r, m), n)| n * (f64::from(r) * lp + f64::from(m - r) * lq))
                    .sum::<f64>();
        }
        let (a, b) = (pi * self.v, (1.0 - pi) * self.v);
        for (acc, base) in [(&mut *la, a), (&mut *lb, b)] {
            acc.clear();
            acc.push(0.0);
            let mut total = 0.0;
            for i in 0..self.max_size {
                total += (base + i as f64).ln();
                acc.push(total);
            }
        }
        self.constant
            + self
                .distinct
                .iter()
                .map(|&((r, m), n)| n * (la[r as usize] + lb[(m - r) as usize]))
                .sum::<f64>()
    }
}

/// Posterior of one arm's risk on a uniform cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    /// Cell midpoints `(i + 0.5) / G`.
    points: Vec<f64>,
    /// Normalized density at each midpoint.
    density: Vec<f64>,
    /// CDF at the `G + 1` cell edges `i / G`.
    cdf: Vec<f64>,
    /// `\int_0^{edge} F` at each cell edge.
    cdf_integral: Vec<f64>,
}

impl GridPosterior {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.points.len() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// CDF values at the cell edges.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_width()
    }

    pub fn mean(&self) -> f64 {
        let h = self.cell_width();
        self.points.iter().zip(&self.density).map(|(x, f)| x * f * h).sum()
    }

    pub fn variance(&self) -> f64 {
        let h = self.cell_width();
        let second: f64 = self
            .points
            .iter()
            .zip(&self.density)
            .map(|(x, f)| (x * x + h * h / 12.0) * f * h)
            .sum();
        let mean = self.mean();
        second - mean * mean
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if x <= 0.0 || x >= 1.0 {
            return None;
        }
        let g = self.points.len();
        let i = ((x * g as f64) as usize).min(g - 1);
        Some((i, x - i as f64 / g as f64))
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        match self.locate(x) {
            None if x <= 0.0 => 0.0,
            None => 1.0,
            Some((i, dx)) => self.cdf[i] + self.density[i] * dx,
        }
    }

    fn integrated_cdf(&self, y: f64) -> f64 {
        match self.locate(y) {
            None if y <= 0.0 => 0.0,
            None => self.cdf_integral[self.points.len()] + (y - 1.0),
            Some((i, dy)) => self.cdf_integral[i] + self.cdf[i] * dy + 0.5 * self.density[i] * dy * dy,
        }
    }
}

/// Normalized posterior of `pi` on `grid_points` cells.
pub fn posterior_grid(data: &BinaryArmData, grid_points: usize) -> Result<GridPosterior> {
    if grid_points < crate::model::AnalysisOptions::MIN_GRID_POINTS {
        return Err(Error::invalid(format!("grid needs at least 64 points, got {grid_points}")));
    }
    let g = grid_points;
    let h = 1.0 / g as f64;
    let points: Vec<f64> = (0..g).map(|i| (i as f64 + 0.5) * h).collect();

    let lik = RisingFactorialLikelihood::new(data);
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    let logs: Vec<f64> = points.iter().map(|&x| lik.eval(x, &mut la, &mut lb)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(format!("log-likelihood is not finite on the grid (max {max})")));
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum::<f64>() * h;
    let density: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let mut cdf = Vec::with_capacity(g + 1);
    let mut cdf_integral = Vec::with_capacity(g + 1);
    let (mut f, mut ic) = (0.0, 0.0);
    cdf.push(0.0);
    cdf_integral.push(0.0);
    for d in &density {
        let next = f + d * h;
        ic += 0.5 * h * (f + next);
        f = next;
        cdf.push(f);
        cdf_integral.push(ic);
    }
    Ok(GridPosterior {
        points,
        density,
        cdf,
        cdf_integral,
    })
}

/// `P(pi_t - pi_c > delta)` for independent arm posteriors.
pub fn prob_risk_diff_exceeds(trt: &GridPosterior, ctrl: &GridPosterior, delta: f64) -> Result<f64> {
    if trt.len() != ctrl.len() {
        return Err(Error::invalid(format!(
            "posterior grids differ: {} vs {} points",
            trt.len(),
            ctrl.len()
        )));
    }
    let g = trt.len();
    let h = trt.cell_width();
    let mut lower = ctrl.integrated_cdf(-delta);
    let mut p = 0.0;
    for i in 0..g {
        let upper = ctrl.integrated_cdf((i + 1) as f64 * h - delta);
        p += trt.density[i] * (upper - lower);
        lower = upper;
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Output of a Metropolis run.
#[derive(Debug, Clone)]
pub struct MhRun {
    pub draws: Vec<f64>,
    /// Acceptance rate over the kept draws.
    pub acceptance_rate: f64,
    /// Proposal scale on the logit axis after burn-in adaptation.
    pub step: f64,
}

impl MhRun {
    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }
}

const TARGET_ACCEPTANCE: f64 = 0.35;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Random-walk Metropolis on `logit(pi)` targeting the uniform-prior
/// posterior. The proposal scale starts at `step` and is adapted towards
/// 35% acceptance during burn-in only.
pub fn mh_posterior_sample<R: Rng + ?Sized>(
    data: &BinaryArmData,
    draws: usize,
    burn_in: usize,
    step: f64,
    rng: &mut R,
) -> Result<MhRun> {
    if draws == 0 || burn_in == 0 {
        return Err(Error::invalid("sampler needs draws >= 1 and burn_in >= 1"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("proposal step must be > 0, got {step}")));
    }
    let log_target = |theta: f64| {
        let pi = sigmoid(theta);
        let l = log_marginal_likelihood(pi, data) + pi.ln() + (1.0 - pi).ln();
        if l.is_finite() {
            l
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut theta = 0.0;
    let mut current = log_target(theta);
    let mut log_step = step.ln();
    let mut kept = Vec::with_capacity(draws);
    let mut accepted_kept = 0usize;
    for t in 0..burn_in + draws {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = theta + log_step.exp() * z;
        let candidate = log_target(proposal);
        let u: f64 = rng.random();
        let accept = candidate > f64::NEG_INFINITY && u.ln() < candidate - current;
        if accept {
            theta = proposal;
            current = candidate;
        }
        if t < burn_in {
            let gain = 1.0 / ((t + 1) as f64).powf(0.6);
            log_step += gain * (f64::from(u8::from(accept)) - TARGET_ACCEPTANCE);
        } else {
            accepted_kept += usize::from(accept);
            kept.push(sigmoid(theta));
        }
    }
    let acceptance_rate = accepted_kept as f64 / draws as f64;
    if !(0.1..=0.7).contains(&acceptance_rate) {
        log::warn!("Metropolis acceptance rate {acceptance_rate:.3} outside [0.1, 0.7]; consider retuning the step");
    }
    Ok(MhRun {
        draws: kept,
        acceptance_rate,
        step: log_step.exp(),
    })
}

/// `P(pi_t - pi_c > delta)` estimated from posterior draws of each arm,
/// averaging over all `(treatment, control)` pairs.
pub fn prob_risk_diff_from_draws(trt: &[f64], ctrl: &[f64], delta: f64) -> f64 {
    let mut sorted = ctrl.to_vec();
    sorted.sort_by(f64::total_cmp);
    let below: usize = trt
        .iter()
        .map(|&t| sorted.partition_point(|&c| c < t - delta))
        .sum();
    below as f64 / (trt.len() as f64 * sorted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn data(clusters: &[(u32, u32)], v: f64) -> BinaryArmData {
        BinaryArmData::new(clusters.to_vec(), v).unwrap()
    }

    #[test]
    fn single_success_is_linear_in_pi() {
        for v in [0.5, 3.0, 19.0, f64::INFINITY] {
            let d = data(&[(1, 1)], v);
            for pi in [0.1, 0.37, 0.8] {
                assert!((log_marginal_likelihood(pi, &d) - pi.ln()).abs() < 1e-12, "v={v} pi={pi}");
            }
        }
    }

    #[test]
    fn no_events_decreasing() {
        let d = data(&[(0, 8), (0, 5), (0, 8)], 9.0);
        let ls: Vec<f64> = (1..100).map(|i| log_marginal_likelihood(i as f64 / 100.0, &d)).collect();
        assert!(ls.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn label_swap_symmetry() {
        let d = data(&[(2, 8), (5, 8), (0, 3), (7, 7)], 4.0);
        let m = d.mirrored();
        for pi in [0.05, 0.3, 0.5, 0.71] {
            let a = log_marginal_likelihood(pi, &d);
            let b = log_marginal_likelihood(1.0 - pi, &m);
            assert!((a - b).abs() < 1e-10);
        }
        let g = posterior_grid(&d, 256).unwrap();
        let gm = posterior_grid(&m, 256).unwrap();
        for i in 0..256 {
            assert!((g.density()[i] - gm.density()[255 - i]).abs() < 1e-9 * g.density()[i].max(1.0));
        }
    }

    #[test]
    fn fast_likelihood_matches_log_gamma() {
        let d = data(&[(2, 8), (5, 8), (0, 3), (7, 7), (2, 8)], 4.0);
        let fast = RisingFactorialLikelihood::new(&d);
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        for pi in [0.001, 0.2, 0.5, 0.93] {
            let exact = log_marginal_likelihood(pi, &d);
            assert!((fast.eval(pi, &mut la, &mut lb) - exact).abs() < 1e-9 * exact.abs().max(1.0));
        }
        let binom = data(&[(2, 8), (5, 8)], f64::INFINITY);
        let fast = RisingFactorialLikelihood::new(&binom);
        assert!((fast.eval(0.4, &mut la, &mut lb) - log_marginal_likelihood(0.4, &binom)).abs() < 1e-12);
    }

    #[test]
    fn empty_data_gives_uniform() {
        let g = posterior_grid(&data(&[], 3.0), 128).unwrap();
        assert!(g.density().iter().all(|d| (d - 1.0).abs() < 1e-12));
        for x in [0.0, 0.1, 0.5, 0.93, 1.0] {
            assert!((g.cdf_at(x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn single_success_posterior_is_beta_2_1() {
        let g = posterior_grid(&data(&[(1, 1)], 2.0), 2048).unwrap();
        assert!((1.0 - g.cdf_at(0.5) - 0.75).abs() < 1e-4);
        assert!((g.integral() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn risk_difference_bounds_and_exchangeability() {
        let d = data(&[(2, 8), (3, 8), (1, 8)], 9.0);
        let g = posterior_grid(&d, 512).unwrap();
        assert!((prob_risk_diff_exceeds(&g, &g, 0.0).unwrap() - 0.5).abs() < 1e-3);
        assert!(prob_risk_diff_exceeds(&g, &g, 1.0).unwrap().abs() < 1e-12);
        assert!((prob_risk_diff_exceeds(&g, &g, -1.0).unwrap() - 1.0).abs() < 1e-12);
        let other = posterior_grid(&d, 256).unwrap();
        assert!(prob_risk_diff_exceeds(&g, &other, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BinaryArmData::new(vec![(3, 2)], 1.0).is_err());
        assert!(BinaryArmData::new(vec![(1, 2)], 0.0).is_err());
        assert!(posterior_grid(&data(&[], 1.0), 32).is_err());
        let mut rng = RngStream::auxiliary(0, 0);
        assert!(mh_posterior_sample(&data(&[], 1.0), 0, 10, 1.0, &mut rng).is_err());
    }

    #[test]
    fn sampler_uniform_target() {
        let mut rng = RngStream::auxiliary(5, 0);
        let run = mh_posterior_sample(&data(&[], 1.0), 40_000, 2_000, 1.0, &mut rng).unwrap();
        let mean = run.mean();
        let var = run.draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / run.draws.len() as f64;
        // Loose bounds: draws are autocorrelated.
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn sampler_is_reproducible() {
        let d = data(&[(2, 8), (3, 8)], 9.0);
        let a = mh_posterior_sample(&d, 500, 100, 1.0, &mut RngStream::auxiliary(6, 1)).unwrap();
        let b = mh_posterior_sample(&d, 500, 100, 1.0, &mut RngStream::auxiliary(6, 1)).unwrap();
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn pairwise_draw_estimator() {
        assert_eq!(prob_risk_diff_from_draws(&[0.5, 0.6], &[0.1, 0.55], 0.0), 0.75);
    }
}
