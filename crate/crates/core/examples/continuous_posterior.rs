//! Closed-form posterior of two arm means under exchangeable clustering and
//! the probability that treatment lowers the mean outcome.

use bayes_crt::datagen::{new_continuous_clusters, sigma_b2_from_icc};
use bayes_crt::normal::{posterior_update, prob_superiority_exact, prob_superiority_mc, ClusterStats, NormalPosterior};
use bayes_crt::rng::RngStream;

fn main() -> bayes_crt::Result<()> {
    let mut rng = RngStream::auxiliary(7, 0);
    let (sigma_w2, rho) = (1.0, 0.2);
    let sigma_b2 = sigma_b2_from_icc(rho, sigma_w2)?;
    let prior = NormalPosterior::new(0.0, 100.0)?;

    let control = new_continuous_clusters(20, 8, 0.0, sigma_w2, sigma_b2, &mut rng)?;
    let treatment = new_continuous_clusters(20, 8, -0.4, sigma_w2, sigma_b2, &mut rng)?;
    let stats = |cs: &[bayes_crt::datagen::ContinuousCluster]| {
        ClusterStats::from_clusters(cs.iter().map(|c| c.observations.as_slice()), sigma_w2, sigma_b2)
    };
    let c = posterior_update(prior, &stats(&control))?;
    let t = posterior_update(prior, &stats(&treatment))?;
    println!("control   N({:.4}, {:.5})", c.mean, c.variance);
    println!("treatment N({:.4}, {:.5})", t.mean, t.variance);

    for delta in [0.0, 0.2, 0.4] {
        let exact = prob_superiority_exact(c, t, delta);
        let mc = prob_superiority_mc(c, t, delta, 100_000, &mut rng)?;
        println!("P(mu_c - mu_t > {delta}) exact {exact:.4}, Monte Carlo {mc:.4}");
    }
    Ok(())
}
