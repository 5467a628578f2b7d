//! Grid posterior of each arm's risk under the beta-binomial model, checked
//! against a Metropolis sampler.

use bayes_crt::beta_binomial::{
    mh_posterior_sample, posterior_grid, prob_risk_diff_exceeds, prob_risk_diff_from_draws, BinaryArmData,
};
use bayes_crt::datagen::new_binary_clusters;
use bayes_crt::rng::RngStream;

fn main() -> bayes_crt::Result<()> {
    let mut rng = RngStream::auxiliary(11, 0);
    let rho = 0.05;
    let v = BinaryArmData::precision_for_icc(rho);
    let arm = |pi: f64, rng: &mut RngStream| -> bayes_crt::Result<BinaryArmData> {
        let clusters = new_binary_clusters(20, 8, pi, rho, rng)?;
        BinaryArmData::new(clusters.iter().map(|c| (c.events, c.size)).collect(), v)
    };
    let control = arm(0.35, &mut rng)?;
    let treatment = arm(0.55, &mut rng)?;

    let gc = posterior_grid(&control, 2048)?;
    let gt = posterior_grid(&treatment, 2048)?;
    println!("control   posterior mean {:.4} sd {:.4}", gc.mean(), gc.variance().sqrt());
    println!("treatment posterior mean {:.4} sd {:.4}", gt.mean(), gt.variance().sqrt());

    let mc = mh_posterior_sample(&control, 20_000, 2_000, 1.0, &mut rng)?;
    let mt = mh_posterior_sample(&treatment, 20_000, 2_000, 1.0, &mut rng)?;
    println!("sampler acceptance {:.2} / {:.2}", mc.acceptance_rate, mt.acceptance_rate);
    for delta in [0.0, 0.1] {
        println!(
            "P(pi_t - pi_c > {delta}) grid {:.4}, sampler {:.4}",
            prob_risk_diff_exceeds(&gt, &gc, delta)?,
            prob_risk_diff_from_draws(&mt.draws, &mc.draws, delta)
        );
    }
    Ok(())
}
