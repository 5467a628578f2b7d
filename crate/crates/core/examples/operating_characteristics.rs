//! False positive rate and power of Design 1 across ICC values.

use bayes_crt::model::{Design, DesignSpec, OutcomeSpec, Scenario};
use bayes_crt::oc::estimate_oc;
use bayes_crt::runner::resolve_workers;

fn main() -> bayes_crt::Result<()> {
    let workers = resolve_workers(None);
    println!("{:>5} {:>6} {:>8} {:>8} {:>12}", "icc", "effect", "rate", "mc_se", "E[particip]");
    for rho in [0.1, 0.3, 0.5] {
        for effect in [0.0, 0.3, 0.6] {
            let scenario = Scenario::new(
                OutcomeSpec::Continuous { mu_c: 0.0, effect, sigma_w2: 1.0, rho },
                DesignSpec::new(Design::Design1, 40, 8, 1, 0.98),
            )?;
            let oc = estimate_oc(&scenario, 500, 1, workers)?;
            println!(
                "{rho:>5} {effect:>6} {:>8.3} {:>8.4} {:>12.1}",
                oc.rejection_rate, oc.mc_se, oc.expected_participants_per_arm
            );
        }
    }
    Ok(())
}
