//! One simulated trial per design, printed look by look.

use bayes_crt::model::{Design, DesignSpec, OutcomeSpec, Scenario};
use bayes_crt::trial::run_trial;

fn main() -> bayes_crt::Result<()> {
    let outcome = OutcomeSpec::Continuous { mu_c: 0.0, effect: 0.4, sigma_w2: 1.0, rho: 0.2 };
    for design in [Design::Design1, Design::Design2] {
        let scenario = Scenario::new(outcome, DesignSpec::new(design, 40, 8, 3, 0.98))?;
        let trial = run_trial(&scenario, 2024, 0)?;
        println!("{design}:");
        for s in &trial.stages {
            println!(
                "  look {} | {:>2} clusters {:>3} participants per arm | P = {:.4}",
                s.stage, s.clusters, s.participants, s.probability
            );
        }
        let verdict = if trial.efficacy_declared { "efficacy" } else { "no decision" };
        println!("  stopped at look {} ({verdict})", trial.stopped_stage);
    }
    Ok(())
}
