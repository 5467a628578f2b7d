//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `(1' S^-1 1, 1' S^-1 y)` with `S` built entry by entry from the
/// exchangeable within-cluster covariance and solved densely.
pub fn dense_quad_forms(clusters: &[Vec<f64>], sigma_w2: f64, sigma_b2: f64) -> (f64, f64) {
    let n: usize = clusters.iter().map(Vec::len).sum();
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    let mut offset = 0;
    for c in clusters {
        for i in 0..c.len() {
            for s in 0..c.len() {
                sigma[(offset + i, offset + s)] = sigma_b2 + if i == s { sigma_w2 } else { 0.0 };
            }
        }
        offset += c.len();
    }
    let y = DVector::from_iterator(n, clusters.iter().flatten().copied());
    let ones = DVector::<f64>::from_element(n, 1.0);
    let lu = sigma.lu();
    let sinv_one = lu.solve(&ones).expect("covariance is positive definite");
    let sinv_y = lu.solve(&y).expect("covariance is positive definite");
    (ones.dot(&sinv_one), ones.dot(&sinv_y))
}

/// Posterior `(mean, variance)` of a normal mean under a `N(a, b2)` prior,
/// by Bayes' rule on the dense covariance.
pub fn dense_posterior(a: f64, b2: f64, clusters: &[Vec<f64>], sigma_w2: f64, sigma_b2: f64) -> (f64, f64) {
    let (q1, qy) = dense_quad_forms(clusters, sigma_w2, sigma_b2);
    ((b2 * qy + a) / (b2 * q1 + 1.0), b2 / (b2 * q1 + 1.0))
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
