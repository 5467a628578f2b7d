//! Generates clustered continuous and binary data and compares the sample
//! moments with the values implied by the ICC.

use bayes_crt::datagen::{new_binary_clusters, new_continuous_clusters, sigma_b2_from_icc};
use bayes_crt::rng::RngStream;

fn main() -> bayes_crt::Result<()> {
    let mut rng = RngStream::auxiliary(42, 0);
    let (mu, sigma_w2, rho) = (1.0, 1.0, 0.3);
    let sigma_b2 = sigma_b2_from_icc(rho, sigma_w2)?;
    let clusters = new_continuous_clusters(5_000, 10, mu, sigma_w2, sigma_b2, &mut rng)?;

    let all: Vec<f64> = clusters.iter().flat_map(|c| c.observations.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    let between = {
        let means: Vec<f64> = clusters.iter().map(|c| c.sum() / c.size() as f64).collect();
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64 - sigma_w2 / 10.0
    };
    println!("continuous: mean {mean:.3} (expect {mu}), variance {var:.3} (expect {:.3})", sigma_b2 + sigma_w2);
    println!("            between-cluster variance {between:.3} (expect {sigma_b2:.3}), icc {:.3}", between / var);

    let (pi, rho) = (0.35, 0.05);
    let binary = new_binary_clusters(20_000, 8, pi, rho, &mut rng)?;
    let props: Vec<f64> = binary.iter().map(|c| c.latent_prop).collect();
    let p_mean = props.iter().sum::<f64>() / props.len() as f64;
    let p_var = props.iter().map(|p| (p - p_mean).powi(2)).sum::<f64>() / (props.len() - 1) as f64;
    let events: u32 = binary.iter().map(|c| c.events).sum();
    println!(
        "binary: latent mean {p_mean:.4} (expect {pi}), latent variance {p_var:.5} (expect {:.5}), event rate {:.4}",
        rho * pi * (1.0 - pi),
        f64::from(events) / (binary.len() * 8) as f64
    );
    Ok(())
}
