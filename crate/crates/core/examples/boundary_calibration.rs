//! Smallest decision boundary keeping the false positive rate at 5% over a
//! set of null scenarios.

use bayes_crt::model::{Design, DesignSpec, OutcomeSpec, Scenario};
use bayes_crt::runner::{calibrate_boundary, resolve_workers, BoundarySearch};

fn main() -> bayes_crt::Result<()> {
    let templates = [0.2, 0.5, 0.8]
        .into_iter()
        .map(|rho| {
            Scenario::new(
                OutcomeSpec::Continuous { mu_c: 0.0, effect: 0.0, sigma_w2: 1.0, rho },
                DesignSpec::new(Design::Design1, 40, 8, 2, 0.95),
            )
        })
        .collect::<bayes_crt::Result<Vec<_>>>()?;
    let workers = resolve_workers(None);

    let calibration = calibrate_boundary(&templates, 0.05, &BoundarySearch::default(), 1000, 3, workers)?;
    for p in &calibration.curve {
        println!("U {:.4}: worst FPR {:.3} (se {:.4}) {}", p.boundary, p.fpr, p.mc_se, if p.passes { "ok" } else { "" });
    }
    println!("recommended U = {:.4}", calibration.recommended);

    let fixed = calibrate_boundary(&templates, 0.05, &BoundarySearch::Candidates(vec![0.95, 0.98]), 1000, 3, workers)?;
    println!("among {{0.95, 0.98}}: {}", fixed.recommended);
    Ok(())
}
