//! Domain types for a two-arm adaptive cluster-randomized trial and the
//! stage-by-stage enrollment schedule of both designs.
//!
//! Direction conventions are fixed: for continuous outcomes smaller is
//! better (treatment mean is `mu_c - effect`), for binary outcomes larger
//! is better (treatment risk is `pi_c + effect`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::sigma_b2_from_icc;
use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// Generative truth for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeSpec {
    Continuous {
        /// Control population mean.
        mu_c: f64,
        /// True effect; the treatment mean is `mu_c - effect`.
        effect: f64,
        /// Within-cluster variance.
        sigma_w2: f64,
        /// Intra-cluster correlation.
        rho: f64,
    },
    Binary {
        /// Control (baseline) risk.
        pi_c: f64,
        /// Risk difference; the treatment risk is `pi_c + effect`.
        effect: f64,
        rho: f64,
    },
}

impl OutcomeSpec {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            OutcomeSpec::Continuous { .. } => OutcomeKind::Continuous,
            OutcomeSpec::Binary { .. } => OutcomeKind::Binary,
        }
    }

    pub fn effect(&self) -> f64 {
        match *self {
            OutcomeSpec::Continuous { effect, .. } | OutcomeSpec::Binary { effect, .. } => effect,
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            OutcomeSpec::Continuous { rho, .. } | OutcomeSpec::Binary { rho, .. } => rho,
        }
    }

    /// Population parameter (mean or risk) of the treatment arm.
    pub fn treatment_parameter(&self) -> f64 {
        match *self {
            OutcomeSpec::Continuous { mu_c, effect, .. } => mu_c - effect,
            OutcomeSpec::Binary { pi_c, effect, .. } => pi_c + effect,
        }
    }

    pub fn control_parameter(&self) -> f64 {
        match *self {
            OutcomeSpec::Continuous { mu_c, .. } => mu_c,
            OutcomeSpec::Binary { pi_c, .. } => pi_c,
        }
    }

    /// Same outcome with a different true effect.
    pub fn with_effect(self, effect: f64) -> Self {
        match self {
            OutcomeSpec::Continuous {
                mu_c, sigma_w2, rho, ..
            } => OutcomeSpec::Continuous {
                mu_c,
                effect,
                sigma_w2,
                rho,
            },
            OutcomeSpec::Binary { pi_c, rho, .. } => OutcomeSpec::Binary { pi_c, effect, rho },
        }
    }
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " `{}` (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(OutcomeKind { Continuous => "continuous", Binary => "binary" });

/// Enrollment design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Clusters enter sequentially, each at full size.
    Design1,
    /// All clusters enter at the start; participants accrue within clusters.
    Design2,
}

string_enum!(Design { Design1 => "design1", Design2 => "design2" });

/// What to do with the clusters (design 1) or participants (design 2) left
/// over when `K + 1` does not divide the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    /// Every stage adds `floor(budget / (K + 1))`; the remainder is never used.
    #[default]
    PaperLiteralFloor,
    /// As above, but the final stage tops up to the full budget.
    FillFinalStage,
}

string_enum!(RemainderPolicy {
    PaperLiteralFloor => "paper_literal_floor",
    FillFinalStage => "fill_final_stage",
});

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    pub design: Design,
    /// Maximum clusters per arm.
    pub n_clusters: usize,
    /// Maximum cluster size.
    pub cluster_size: usize,
    /// Number of interim analyses, excluding the final one.
    pub interims: usize,
    /// Posterior probability boundary `U`.
    pub boundary: f64,
    /// Minimal important difference.
    pub delta: f64,
    pub remainder: RemainderPolicy,
}

impl DesignSpec {
    pub fn new(design: Design, n_clusters: usize, cluster_size: usize, interims: usize, boundary: f64) -> Self {
        Self {
            design,
            n_clusters,
            cluster_size,
            interims,
            boundary,
            delta: 0.0,
            remainder: RemainderPolicy::PaperLiteralFloor,
        }
    }

    pub fn analyses(&self) -> usize {
        self.interims + 1
    }
}

/// How the continuous-outcome prior evolves between analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Every analysis starts from the design prior and uses all data so far.
    #[default]
    Cumulative,
    /// Every analysis starts from the previous posterior and uses only the
    /// data enrolled since the previous analysis.
    Stagewise,
}

string_enum!(UpdateMode { Cumulative => "cumulative", Stagewise => "stagewise" });

/// Normal prior on each arm's population mean. Binary outcomes always use
/// a uniform prior on the population risk and ignore these fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub mean: f64,
    pub variance: f64,
    pub update_mode: UpdateMode,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mean: 0.0,
            variance: 100.0,
            update_mode: UpdateMode::Cumulative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProbabilityMode {
    /// Closed-form normal CDF.
    #[default]
    Exact,
    /// Monte-Carlo estimate from this many posterior draws per arm.
    MonteCarlo { samples: usize },
}

impl ProbabilityMode {
    pub const DEFAULT_MC_SAMPLES: usize = 10_000;

    pub fn as_str(&self) -> &'static str {
        match self {
            ProbabilityMode::Exact => "exact",
            ProbabilityMode::MonteCarlo { .. } => "mc",
        }
    }
}

/// Numerical settings of the interim analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AnalysisOptions {
    pub probability: ProbabilityMode,
    /// Grid points for the binary posterior quadrature.
    pub grid_points: usize,
}

impl AnalysisOptions {
    pub const DEFAULT_GRID_POINTS: usize = 2048;
    pub const MIN_GRID_POINTS: usize = 64;
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            probability: ProbabilityMode::Exact,
            grid_points: Self::DEFAULT_GRID_POINTS,
        }
    }
}

/// Enrollment state of one arm at one analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub cum_clusters: usize,
    pub cluster_sizes: Vec<usize>,
}

impl Stage {
    pub fn participants(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }
}

/// Per-analysis cumulative enrollment, identical for both arms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisSchedule {
    pub stages: Vec<Stage>,
}

impl AnalysisSchedule {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn final_stage(&self) -> &Stage {
        self.stages.last().expect("schedule has at least one stage")
    }
}

fn check_design(design: &DesignSpec, out: &mut Vec<Violation>) {
    if design.n_clusters == 0 {
        out.push(Violation::new("design.n_clusters", "must be at least 1"));
    }
    if design.cluster_size == 0 {
        out.push(Violation::new("design.cluster_size", "must be at least 1"));
    }
    let analyses = design.analyses();
    match design.design {
        Design::Design1 if design.n_clusters / analyses == 0 => out.push(Violation::new(
            "design.interims",
            format!(
                "design 1 needs floor(n / (K + 1)) >= 1, got n = {} with K = {}",
                design.n_clusters, design.interims
            ),
        )),
        Design::Design2 if design.cluster_size / analyses == 0 => out.push(Violation::new(
            "design.interims",
            format!(
                "design 2 needs floor(m / (K + 1)) >= 1, got m = {} with K = {}",
                design.cluster_size, design.interims
            ),
        )),
        _ => {}
    }
    // U = 1 is accepted as an unreachable boundary.
    if !(design.boundary > 0.0 && design.boundary <= 1.0) {
        out.push(Violation::new("design.boundary", format!("must lie in (0, 1], got {}", design.boundary)));
    }
    if !design.delta.is_finite() {
        out.push(Violation::new("design.delta", "must be finite"));
    }
}

/// Cumulative enrollment at each of the `K + 1` analyses.
pub fn build_schedule(design: &DesignSpec) -> Result<AnalysisSchedule> {
    let mut violations = Vec::new();
    check_design(design, &mut violations);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }

    let analyses = design.analyses();
    let (n, m) = (design.n_clusters, design.cluster_size);
    let fill = design.remainder == RemainderPolicy::FillFinalStage;
    let stages = (1..=analyses)
        .map(|k| {
            let last = k == analyses;
            match design.design {
                Design::Design1 => {
                    let clusters = if last && fill { n } else { k * (n / analyses) };
                    Stage {
                        cum_clusters: clusters,
                        cluster_sizes: vec![m; clusters],
                    }
                }
                Design::Design2 => {
                    let size = if last && fill { m } else { k * (m / analyses) };
                    Stage {
                        cum_clusters: n,
                        cluster_sizes: vec![size; n],
                    }
                }
            }
        })
        .collect();
    Ok(AnalysisSchedule { stages })
}

/// A validated scenario with its derived quantities attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub outcome: OutcomeSpec,
    pub design: DesignSpec,
    pub prior: PriorSpec,
    pub analysis: AnalysisOptions,
    pub schedule: AnalysisSchedule,
    /// Between-cluster variance (continuous outcomes).
    pub sigma_b2: Option<f64>,
    /// Beta precision `v = (1 - rho) / rho` (binary outcomes with rho > 0).
    pub beta_precision: Option<f64>,
}

/// Checks every invariant of the inputs, reporting all violations at once.
pub fn validate_scenario(
    outcome: OutcomeSpec,
    design: DesignSpec,
    prior: PriorSpec,
    analysis: AnalysisOptions,
) -> Result<Scenario> {
    let mut v = Vec::new();
    let rho = outcome.rho();
    if !(0.0..1.0).contains(&rho) {
        v.push(Violation::new("outcome.rho", format!("must lie in [0, 1), got {rho}")));
    }
    let mut sigma_b2 = None;
    let mut beta_precision = None;
    match outcome {
        OutcomeSpec::Continuous {
            mu_c,
            effect,
            sigma_w2,
            ..
        } => {
            if !mu_c.is_finite() {
                v.push(Violation::new("outcome.mu_c", "must be finite"));
            }
            if !(effect.is_finite() && effect >= 0.0) {
                v.push(Violation::new("outcome.effect", format!("must be finite and >= 0, got {effect}")));
            }
            if !(sigma_w2.is_finite() && sigma_w2 > 0.0) {
                v.push(Violation::new("outcome.sigma_w2", format!("must be > 0, got {sigma_w2}")));
            }
            if v.is_empty() {
                match sigma_b2_from_icc(rho, sigma_w2) {
                    Ok(s) if s.is_finite() => sigma_b2 = Some(s),
                    _ => v.push(Violation::new("outcome.rho", "between-cluster variance is not finite")),
                }
            }
        }
        OutcomeSpec::Binary { pi_c, effect, .. } => {
            if !(pi_c > 0.0 && pi_c < 1.0) {
                v.push(Violation::new("outcome.pi_c", format!("must lie in (0, 1), got {pi_c}")));
            }
            let pi_t = pi_c + effect;
            if !(pi_t > 0.0 && pi_t < 1.0) {
                v.push(Violation::new(
                    "outcome.effect",
                    format!("π_t out of (0,1): pi_c + effect = {pi_t}"),
                ));
            }
            if rho > 0.0 && rho < 1.0 {
                beta_precision = Some((1.0 - rho) / rho);
            }
        }
    }
    if !(prior.variance.is_finite() && prior.variance > 0.0) {
        v.push(Violation::new("prior.variance", format!("must be > 0, got {}", prior.variance)));
    }
    if !prior.mean.is_finite() {
        v.push(Violation::new("prior.mean", "must be finite"));
    }
    if let ProbabilityMode::MonteCarlo { samples } = analysis.probability {
        if samples == 0 {
            v.push(Violation::new("analysis.mc_samples", "must be at least 1"));
        }
    }
    if analysis.grid_points < AnalysisOptions::MIN_GRID_POINTS {
        v.push(Violation::new(
            "analysis.grid_points",
            format!("must be at least {}, got {}", AnalysisOptions::MIN_GRID_POINTS, analysis.grid_points),
        ));
    }
    check_design(&design, &mut v);
    if !v.is_empty() {
        return Err(Error::InvalidScenario(v));
    }
    let schedule = build_schedule(&design)?;
    Ok(Scenario {
        outcome,
        design,
        prior,
        analysis,
        schedule,
        sigma_b2,
        beta_precision,
    })
}

fn digest_u64(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

impl Scenario {
    /// Convenience constructor with default prior and analysis options.
    pub fn new(outcome: OutcomeSpec, design: DesignSpec) -> Result<Self> {
        validate_scenario(outcome, design, PriorSpec::default(), AnalysisOptions::default())
    }

    pub fn kind(&self) -> OutcomeKind {
        self.outcome.kind()
    }

    /// Canonical `key=value` rendering of the data-generating fields.
    fn generative_text(&self) -> String {
        let outcome = match self.outcome {
            OutcomeSpec::Continuous {
                mu_c,
                effect,
                sigma_w2,
                rho,
            } => format!("continuous;mu_c={mu_c:?};effect={effect:?};sigma_w2={sigma_w2:?};icc={rho:?}"),
            OutcomeSpec::Binary { pi_c, effect, rho } => {
                format!("binary;pi_c={pi_c:?};effect={effect:?};icc={rho:?}")
            }
        };
        let d = &self.design;
        format!(
            "{outcome};n={};m={};K={};remainder={}",
            d.n_clusters, d.cluster_size, d.interims, d.remainder
        )
    }

    /// Canonical rendering of every field, independent of how the scenario
    /// was written down.
    pub fn canonical_text(&self) -> String {
        let d = &self.design;
        let mc = match self.analysis.probability {
            ProbabilityMode::Exact => 0,
            ProbabilityMode::MonteCarlo { samples } => samples,
        };
        format!(
            "{};design={};U={:?};delta={:?};prior_mean={:?};prior_var={:?};update={};prob={};mc={};G={}",
            self.generative_text(),
            d.design,
            d.boundary,
            d.delta,
            self.prior.mean,
            self.prior.variance,
            self.prior.update_mode,
            self.analysis.probability.as_str(),
            mc,
            self.analysis.grid_points,
        )
    }

    /// Stable hex hash of all scenario fields.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", digest_u64(&self.canonical_text()))
    }

    /// Key for random-stream derivation. Depends on the data-generating
    /// fields only, so scenarios that differ in design, boundary or analysis
    /// settings see common random numbers.
    pub fn stream_key(&self) -> u64 {
        digest_u64(&self.generative_text())
    }

    /// Same scenario with a different true effect, revalidated.
    pub fn with_effect(&self, effect: f64) -> Result<Self> {
        validate_scenario(self.outcome.with_effect(effect), self.design, self.prior, self.analysis)
    }

    pub fn with_boundary(&self, boundary: f64) -> Result<Self> {
        let design = DesignSpec { boundary, ..self.design };
        validate_scenario(self.outcome, design, self.prior, self.analysis)
    }

    pub fn with_design(&self, kind: Design) -> Result<Self> {
        let design = DesignSpec { design: kind, ..self.design };
        validate_scenario(self.outcome, design, self.prior, self.analysis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(s: &AnalysisSchedule) -> Vec<(usize, usize)> {
        s.stages.iter().map(|st| (st.cum_clusters, st.cluster_sizes[0])).collect()
    }

    #[test]
    fn four_by_six_example_both_designs() {
        let d1 = build_schedule(&DesignSpec::new(Design::Design1, 4, 6, 1, 0.95)).unwrap();
        assert_eq!(sizes(&d1), vec![(2, 6), (4, 6)]);
        let d2 = build_schedule(&DesignSpec::new(Design::Design2, 4, 6, 1, 0.95)).unwrap();
        assert_eq!(sizes(&d2), vec![(4, 3), (4, 6)]);
        assert_eq!(d2.stages[0].participants(), 12);
    }

    #[test]
    fn no_interims_is_single_full_stage() {
        let s = build_schedule(&DesignSpec::new(Design::Design1, 20, 8, 0, 0.95)).unwrap();
        assert_eq!(sizes(&s), vec![(20, 8)]);
        let s2 = build_schedule(&DesignSpec::new(Design::Design2, 20, 8, 0, 0.95)).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn floor_policy_leaves_remainder_unused() {
        let s = build_schedule(&DesignSpec::new(Design::Design1, 20, 8, 2, 0.95)).unwrap();
        let clusters: Vec<_> = s.stages.iter().map(|st| st.cum_clusters).collect();
        assert_eq!(clusters, vec![6, 12, 18]);

        let mut fill = DesignSpec::new(Design::Design1, 20, 8, 2, 0.95);
        fill.remainder = RemainderPolicy::FillFinalStage;
        let s = build_schedule(&fill).unwrap();
        assert_eq!(s.final_stage().cum_clusters, 20);

        let mut fill2 = DesignSpec::new(Design::Design2, 20, 8, 2, 0.95);
        fill2.remainder = RemainderPolicy::FillFinalStage;
        let s = build_schedule(&fill2).unwrap();
        assert_eq!(sizes(&s), vec![(20, 2), (20, 4), (20, 8)]);
    }

    #[test]
    fn empty_stage_rejected() {
        assert!(build_schedule(&DesignSpec::new(Design::Design1, 2, 8, 2, 0.95)).is_err());
        assert!(build_schedule(&DesignSpec::new(Design::Design2, 20, 2, 2, 0.95)).is_err());
        assert!(build_schedule(&DesignSpec::new(Design::Design2, 2, 8, 2, 0.95)).is_ok());
    }

    #[test]
    fn binary_range_checks() {
        let design = DesignSpec::new(Design::Design1, 20, 8, 1, 0.95);
        let ok = Scenario::new(OutcomeSpec::Binary { pi_c: 0.45, effect: 0.3, rho: 0.05 }, design).unwrap();
        assert!((ok.outcome.treatment_parameter() - 0.75).abs() < 1e-12);
        assert!((ok.beta_precision.unwrap() - 19.0).abs() < 1e-12);

        let err = Scenario::new(OutcomeSpec::Binary { pi_c: 0.9, effect: 0.2, rho: 0.05 }, design).unwrap_err();
        match err {
            Error::InvalidScenario(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].field, "outcome.effect");
                assert!(v[0].message.contains("π_t out of (0,1)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn continuous_attaches_between_variance() {
        let design = DesignSpec::new(Design::Design1, 20, 8, 1, 0.95);
        let s = Scenario::new(
            OutcomeSpec::Continuous { mu_c: 0.0, effect: 0.0, sigma_w2: 1.0, rho: 0.5 },
            design,
        )
        .unwrap();
        assert!((s.sigma_b2.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_violations_reported() {
        let mut design = DesignSpec::new(Design::Design1, 0, 8, 1, 1.5);
        design.delta = f64::NAN;
        let prior = PriorSpec { variance: 0.0, ..PriorSpec::default() };
        let err = validate_scenario(
            OutcomeSpec::Continuous { mu_c: 0.0, effect: -1.0, sigma_w2: 0.0, rho: 1.0 },
            design,
            prior,
            AnalysisOptions { grid_points: 10, ..AnalysisOptions::default() },
        )
        .unwrap_err();
        let Error::InvalidScenario(v) = err else { panic!() };
        let fields: Vec<_> = v.iter().map(|x| x.field).collect();
        for f in [
            "outcome.rho",
            "outcome.effect",
            "outcome.sigma_w2",
            "prior.variance",
            "analysis.grid_points",
            "design.n_clusters",
            "design.boundary",
            "design.delta",
        ] {
            assert!(fields.contains(&f), "missing {f} in {fields:?}");
        }
    }

    #[test]
    fn stream_key_ignores_design_and_boundary() {
        let o = OutcomeSpec::Continuous { mu_c: 0.0, effect: 0.2, sigma_w2: 1.0, rho: 0.2 };
        let a = Scenario::new(o, DesignSpec::new(Design::Design1, 20, 8, 1, 0.95)).unwrap();
        let b = Scenario::new(o, DesignSpec::new(Design::Design2, 20, 8, 1, 0.98)).unwrap();
        assert_eq!(a.stream_key(), b.stream_key());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
