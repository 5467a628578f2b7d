//! Conjugate normal posterior for an arm's population mean when outcomes
//! are block compound-symmetric: variance `sigma_w2 + sigma_b2` on the
//! diagonal, `sigma_b2` within a cluster, zero across clusters.
//!
//! Because each cluster block is `sigma_w2 I + sigma_b2 J`, the quadratic
//! forms in the posterior reduce to per-cluster sizes and sums:
//! `1' S_j^-1 1 = m_j / (sigma_w2 + m_j sigma_b2)` and
//! `1' S_j^-1 Y_j = sum_j / (sigma_w2 + m_j sigma_b2)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::UpdateMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPosterior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
            return Err(Error::invalid(format!("normal posterior needs finite mean and variance > 0, got ({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }
}

/// Size and outcome total of one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSummary {
    pub size: usize,
    pub sum: f64,
}

/// Sufficient statistics of one arm under known variance components.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub clusters: Vec<ClusterSummary>,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
}

impl ClusterStats {
    pub fn new(sigma_w2: f64, sigma_b2: f64) -> Self {
        Self {
            clusters: Vec::new(),
            sigma_w2,
            sigma_b2,
        }
    }

    pub fn from_clusters<'a, I>(observations: I, sigma_w2: f64, sigma_b2: f64) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let clusters = observations
            .into_iter()
            .map(|ys| ClusterSummary {
                size: ys.len(),
                sum: ys.iter().sum(),
            })
            .collect();
        Self {
            clusters,
            sigma_w2,
            sigma_b2,
        }
    }

    pub fn push(&mut self, size: usize, sum: f64) {
        self.clusters.push(ClusterSummary { size, sum });
    }

    pub fn participants(&self) -> usize {
        self.clusters.iter().map(|c| c.size).sum()
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma_w2 > 0.0) || !(self.sigma_b2 >= 0.0) {
            return Err(Error::invalid(format!(
                "variance components must satisfy sigma_w2 > 0, sigma_b2 >= 0 (got {}, {})",
                self.sigma_w2, self.sigma_b2
            )));
        }
        if let Some(c) = self.clusters.iter().find(|c| c.size == 0 || !c.sum.is_finite()) {
            return Err(Error::invalid(format!("invalid cluster summary {c:?}")));
        }
        Ok(())
    }
}

/// `1' Sigma^-1 1` and `1' Sigma^-1 Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForms {
    pub one_sinv_one: f64,
    pub one_sinv_y: f64,
}

pub fn quad_forms(stats: &ClusterStats) -> Result<QuadForms> {
    stats.check()?;
    let (mut one_sinv_one, mut one_sinv_y) = (0.0, 0.0);
    for c in &stats.clusters {
        let m = c.size as f64;
        let denom = stats.sigma_w2 + m * stats.sigma_b2;
        one_sinv_one += m / denom;
        one_sinv_y += c.sum / denom;
    }
    Ok(QuadForms {
        one_sinv_one,
        one_sinv_y,
    })
}

/// Posterior of the population mean under the prior `N(a, b2)`.
pub fn posterior_update(prior: NormalPosterior, stats: &ClusterStats) -> Result<NormalPosterior> {
    let q = quad_forms(stats)?;
    let (a, b2) = (prior.mean, prior.variance);
    let denom = b2 * q.one_sinv_one + 1.0;
    NormalPosterior::new((b2 * q.one_sinv_y + a) / denom, b2 / denom)
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(mu_c - mu_t > delta)` for independent normal arm posteriors.
pub fn prob_superiority_exact(ctrl: NormalPosterior, trt: NormalPosterior, delta: f64) -> f64 {
    let z = (ctrl.mean - trt.mean - delta) / (ctrl.variance + trt.variance).sqrt();
    std_normal_cdf(z)
}

/// Monte-Carlo estimate of `P(mu_c - mu_t > delta)` from `samples`
/// independent draws of each arm posterior.
pub fn prob_superiority_mc<R: Rng + ?Sized>(
    ctrl: NormalPosterior,
    trt: NormalPosterior,
    delta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("Monte-Carlo estimate needs at least one sample"));
    }
    let c = Normal::new(ctrl.mean, ctrl.variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let t = Normal::new(trt.mean, trt.variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let hits = (0..samples)
        .filter(|_| {
            let mc = c.sample(rng);
            let mt = t.sample(rng);
            mc - mt > delta
        })
        .count();
    Ok(hits as f64 / samples as f64)
}

/// Tracks one arm's posterior across analyses. It is always fed the
/// cumulative data; in [`UpdateMode::Stagewise`] it updates the previous
/// posterior with only the participants added since the last call, treating
/// each cluster's new participants as their own compound-symmetric block.
#[derive(Debug, Clone)]
pub struct SequentialUpdater {
    prior: NormalPosterior,
    mode: UpdateMode,
    current: NormalPosterior,
    seen: Vec<ClusterSummary>,
}

impl SequentialUpdater {
    pub fn new(prior: NormalPosterior, mode: UpdateMode) -> Self {
        Self {
            prior,
            mode,
            current: prior,
            seen: Vec::new(),
        }
    }

    pub fn current(&self) -> NormalPosterior {
        self.current
    }

    pub fn observe(&mut self, cumulative: &ClusterStats) -> Result<NormalPosterior> {
        if cumulative.clusters.len() < self.seen.len() {
            return Err(Error::invalid("cumulative data lost clusters between analyses"));
        }
        self.current = match self.mode {
            UpdateMode::Cumulative => posterior_update(self.prior, cumulative)?,
            UpdateMode::Stagewise => {
                let mut batch = ClusterStats::new(cumulative.sigma_w2, cumulative.sigma_b2);
                for (j, c) in cumulative.clusters.iter().enumerate() {
                    match self.seen.get(j) {
                        None => batch.push(c.size, c.sum),
                        Some(old) if c.size > old.size => batch.push(c.size - old.size, c.sum - old.sum),
                        Some(old) if c.size == old.size => {}
                        Some(_) => return Err(Error::invalid(format!("cluster {j} shrank between analyses"))),
                    }
                }
                posterior_update(self.current, &batch)?
            }
        };
        self.seen.clone_from(&cumulative.clusters);
        Ok(self.current)
    }
}
