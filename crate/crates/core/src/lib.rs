//! Simulation engine for Bayesian adaptive cluster-randomized trials.
//!
//! Two enrollment designs are supported: design 1 enrolls whole clusters
//! sequentially, design 2 enrolls every cluster up front and accrues
//! participants within clusters. At each of the `K + 1` analyses the trial
//! stops for efficacy once `P(theta > delta | data) > U`.
//!
//! * [`model`]: scenario types and the enrollment schedule.
//! * [`datagen`]: clustered continuous and binary outcomes with a given ICC.
//! * [`normal`]: conjugate posterior under compound-symmetric clustering.
//! * [`beta_binomial`]: grid posterior of a risk under the beta-binomial
//!   model, with a Metropolis cross-check.
//! * [`trial`]: one simulated trial.
//! * [`oc`]: false positive rate, power and expected enrollment by
//!   replication.
//! * [`runner`]: scenario grids, resumable result tables, boundary
//!   calibration and plot data.
//!
//! ```
//! use bayes_crt::model::{Design, DesignSpec, OutcomeSpec, Scenario};
//! use bayes_crt::oc::estimate_oc;
//!
//! let scenario = Scenario::new(
//!     OutcomeSpec::Continuous { mu_c: 0.0, effect: 0.0, sigma_w2: 1.0, rho: 0.2 },
//!     DesignSpec::new(Design::Design1, 20, 8, 1, 0.98),
//! )?;
//! let fpr = estimate_oc(&scenario, 100, 7, 1)?;
//! assert!(fpr.rejection_rate < 0.2);
//! # Ok::<(), bayes_crt::Error>(())
//! ```

pub mod beta_binomial;
pub mod datagen;
pub mod error;
pub mod model;
pub mod normal;
pub mod oc;
pub mod rng;
pub mod runner;
pub mod trial;

pub use error::{Error, Result};
