//! Paired comparison of the two designs on common random numbers.

use bayes_crt::model::{Design, DesignSpec, OutcomeSpec, Scenario};
use bayes_crt::oc::compare_designs;
use bayes_crt::runner::resolve_workers;

fn main() -> bayes_crt::Result<()> {
    let workers = resolve_workers(None);
    for effect in [0.0, 0.3, 0.5] {
        let d1 = Scenario::new(
            OutcomeSpec::Continuous { mu_c: 0.0, effect, sigma_w2: 1.0, rho: 0.3 },
            DesignSpec::new(Design::Design1, 40, 8, 1, 0.98),
        )?;
        let d2 = d1.with_design(Design::Design2)?;
        let cmp = compare_designs(&d1, &d2, 1000, 5, workers)?;
        println!(
            "effect {effect}: design1 {:.3}, design2 {:.3}, difference {:+.3} (se {:.4}); participants {:.0} vs {:.0}",
            cmp.first.rejection_rate,
            cmp.second.rejection_rate,
            cmp.difference,
            cmp.se,
            cmp.first.expected_participants_per_arm,
            cmp.second.expected_participants_per_arm
        );
    }
    Ok(())
}
