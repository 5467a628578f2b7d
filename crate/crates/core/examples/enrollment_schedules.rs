//! Prints the look-by-look enrollment of both designs, including a case
//! where the cluster count does not divide evenly across stages.

use bayes_crt::model::{build_schedule, Design, DesignSpec, RemainderPolicy};

fn main() -> bayes_crt::Result<()> {
    for (n, m, k) in [(20, 8, 1), (40, 8, 3), (21, 9, 2)] {
        for design in [Design::Design1, Design::Design2] {
            for remainder in [RemainderPolicy::PaperLiteralFloor, RemainderPolicy::FillFinalStage] {
                let spec = DesignSpec {
                    remainder,
                    ..DesignSpec::new(design, n, m, k, 0.98)
                };
                let schedule = build_schedule(&spec)?;
                let looks: Vec<String> = schedule
                    .stages
                    .iter()
                    .map(|s| format!("{} clusters/{} participants", s.cum_clusters, s.participants()))
                    .collect();
                println!("n={n:<2} m={m} K={k} {design} {remainder:<19} | {}", looks.join(" -> "));
            }
        }
    }
    Ok(())
}
