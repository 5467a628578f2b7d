//! Clustered outcome generation.
//!
//! Continuous clusters draw a latent mean `mu_j ~ N(mu, sigma_b2)` and
//! participants `Y_ij ~ N(mu_j, sigma_w2)`. Binary clusters draw a latent
//! risk `pi_j ~ Beta(pi v, (1 - pi) v)` with `v = (1 - rho) / rho` and
//! accumulate Bernoulli(`pi_j`) outcomes. Extending a cluster keeps its
//! latent effect, which is how design 2 grows the same clusters over stages.

use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Arm;

/// Between-cluster variance implied by an ICC and a within-cluster variance.
pub fn sigma_b2_from_icc(rho: f64, sigma_w2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("icc must lie in [0, 1), got {rho}")));
    }
    if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
        return Err(Error::invalid(format!("sigma_w2 must be > 0, got {sigma_w2}")));
    }
    Ok(sigma_w2 * rho / (1.0 - rho))
}

/// Beta precision `v = (1 - rho) / rho`; `None` when `rho == 0`.
pub fn beta_precision(rho: f64) -> Option<f64> {
    (rho > 0.0 && rho < 1.0).then(|| (1.0 - rho) / rho)
}

fn normal(mean: f64, variance: f64) -> Result<Normal<f64>> {
    Normal::new(mean, variance.sqrt()).map_err(|e| Error::invalid(format!("normal({mean}, {variance}): {e}")))
}

fn require_positive(extra: usize) -> Result<()> {
    if extra == 0 {
        return Err(Error::invalid("cluster extension needs at least one participant"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousCluster {
    pub latent_mean: f64,
    pub observations: Vec<f64>,
}

impl ContinuousCluster {
    /// Draws the latent mean only; the cluster starts empty.
    pub fn spawn<R: Rng + ?Sized>(mu: f64, sigma_b2: f64, rng: &mut R) -> Result<Self> {
        if !(sigma_b2 >= 0.0 && sigma_b2.is_finite()) {
            return Err(Error::invalid(format!("sigma_b2 must be >= 0, got {sigma_b2}")));
        }
        let latent_mean = normal(mu, sigma_b2)?.sample(rng);
        Ok(Self {
            latent_mean,
            observations: Vec::new(),
        })
    }

    pub fn extend<R: Rng + ?Sized>(&mut self, extra: usize, sigma_w2: f64, rng: &mut R) -> Result<()> {
        require_positive(extra)?;
        if !(sigma_w2 > 0.0) {
            return Err(Error::invalid(format!("sigma_w2 must be > 0, got {sigma_w2}")));
        }
        let within = normal(self.latent_mean, sigma_w2)?;
        self.observations.extend(within.sample_iter(rng).take(extra));
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.observations.len()
    }

    pub fn sum(&self) -> f64 {
        self.observations.iter().sum()
    }
}

pub fn new_continuous_clusters<R: Rng + ?Sized>(
    count: usize,
    size: usize,
    mu: f64,
    sigma_w2: f64,
    sigma_b2: f64,
    rng: &mut R,
) -> Result<Vec<ContinuousCluster>> {
    if count == 0 || size == 0 {
        return Err(Error::invalid("cluster count and size must be at least 1"));
    }
    (0..count)
        .map(|_| {
            let mut c = ContinuousCluster::spawn(mu, sigma_b2, rng)?;
            c.extend(size, sigma_w2, rng)?;
            Ok(c)
        })
        .collect()
}

pub fn extend_continuous_cluster<R: Rng + ?Sized>(
    mut cluster: ContinuousCluster,
    extra: usize,
    sigma_w2: f64,
    rng: &mut R,
) -> Result<ContinuousCluster> {
    cluster.extend(extra, sigma_w2, rng)?;
    Ok(cluster)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCluster {
    pub latent_prop: f64,
    pub events: u32,
    pub size: u32,
}

impl BinaryCluster {
    /// Draws the latent risk only. With `rho == 0` every cluster shares `pi`.
    pub fn spawn<R: Rng + ?Sized>(pi: f64, rho: f64, rng: &mut R) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::invalid(format!("risk must lie in (0, 1), got {pi}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid(format!("icc must lie in [0, 1), got {rho}")));
        }
        let latent_prop = match beta_precision(rho) {
            None => pi,
            Some(v) => Beta::new(pi * v, (1.0 - pi) * v)
                .map_err(|e| Error::invalid(format!("beta({}, {}): {e}", pi * v, (1.0 - pi) * v)))?
                .sample(rng),
        };
        Ok(Self {
            latent_prop,
            events: 0,
            size: 0,
        })
    }

    /// Adds `extra` Bernoulli(`latent_prop`) participants, one uniform each,
    /// so the running event count after any split of the same stream equals
    /// the one-shot count.
    pub fn extend<R: Rng + ?Sized>(&mut self, extra: usize, rng: &mut R) -> Result<()> {
        require_positive(extra)?;
        let hits = (0..extra).filter(|_| rng.random::<f64>() < self.latent_prop).count();
        self.events += hits as u32;
        self.size += extra as u32;
        Ok(())
    }
}

pub fn new_binary_clusters<R: Rng + ?Sized>(
    count: usize,
    size: usize,
    pi: f64,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<BinaryCluster>> {
    if count == 0 || size == 0 {
        return Err(Error::invalid("cluster count and size must be at least 1"));
    }
    (0..count)
        .map(|_| {
            let mut c = BinaryCluster::spawn(pi, rho, rng)?;
            c.extend(size, rng)?;
            Ok(c)
        })
        .collect()
}

pub fn extend_binary_cluster<R: Rng + ?Sized>(
    mut cluster: BinaryCluster,
    extra: usize,
    rng: &mut R,
) -> Result<BinaryCluster> {
    cluster.extend(extra, rng)?;
    Ok(cluster)
}

/// Column header of dataset dumps.
pub const DATASET_HEADER: [&str; 5] = ["replication", "arm", "cluster", "subject", "value"];

/// Writes generated datasets as `replication,arm,cluster,subject,value`
/// rows. Binary clusters keep only their event count, so their dump lists
/// the events as the first `events` subjects (value 1) followed by zeros.
pub struct DatasetWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(DATASET_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_continuous(&mut self, replication: u64, arm: Arm, clusters: &[ContinuousCluster]) -> Result<()> {
        for (j, c) in clusters.iter().enumerate() {
            for (i, y) in c.observations.iter().enumerate() {
                self.inner.write_record(&[
                    replication.to_string(),
                    arm.as_str().to_string(),
                    j.to_string(),
                    i.to_string(),
                    y.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn write_binary(&mut self, replication: u64, arm: Arm, clusters: &[BinaryCluster]) -> Result<()> {
        for (j, c) in clusters.iter().enumerate() {
            for i in 0..c.size {
                let value = u32::from(i < c.events);
                self.inner.write_record(&[
                    replication.to_string(),
                    arm.as_str().to_string(),
                    j.to_string(),
                    i.to_string(),
                    value.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<dataset>", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<dataset>", std::io::Error::other(e.to_string())))
    }
}
