//! Single-trial execution: enroll per the schedule, analyze the cumulative
//! data at every look, stop for efficacy as soon as
//! `P(theta > delta | data) > U`.

use std::io::Write;

use crate::beta_binomial::{self, BinaryArmData, GridPosterior};
use crate::datagen::{BinaryCluster, ContinuousCluster};
use crate::error::{Error, Result};
use crate::model::{OutcomeKind, OutcomeSpec, ProbabilityMode, Scenario};
use crate::normal::{self, ClusterStats, NormalPosterior, SequentialUpdater};
use crate::rng::{Arm, Purpose, RngStream, StreamId};

/// Posterior mean and variance of one arm's population parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSummary {
    pub mean: f64,
    pub variance: f64,
}

impl From<NormalPosterior> for ArmSummary {
    fn from(p: NormalPosterior) -> Self {
        Self {
            mean: p.mean,
            variance: p.variance,
        }
    }
}

impl From<&GridPosterior> for ArmSummary {
    fn from(g: &GridPosterior) -> Self {
        Self {
            mean: g.mean(),
            variance: g.variance(),
        }
    }
}

/// One arm's cumulative data at an analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmData {
    Continuous(ClusterStats),
    Binary(BinaryArmData),
}

impl ArmData {
    fn clusters(&self) -> usize {
        match self {
            ArmData::Continuous(s) => s.clusters.len(),
            ArmData::Binary(b) => b.clusters.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub control: ArmData,
    pub treatment: ArmData,
}

/// Result of one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// `P(theta > delta | data)`.
    pub probability: f64,
    pub control: ArmSummary,
    pub treatment: ArmSummary,
}

/// Stateful per-trial analyzer; carries the continuous posteriors between
/// looks when the prior update mode is stagewise.
#[derive(Debug, Clone)]
pub struct Analyzer {
    kind: OutcomeKind,
    delta: f64,
    probability: ProbabilityMode,
    grid_points: usize,
    updaters: [SequentialUpdater; 2],
    master_seed: u64,
    scenario_key: u64,
    replication: u64,
}

impl Analyzer {
    pub fn new(scenario: &Scenario, master_seed: u64, replication: u64) -> Result<Self> {
        let prior = NormalPosterior::new(scenario.prior.mean, scenario.prior.variance)?;
        let updater = SequentialUpdater::new(prior, scenario.prior.update_mode);
        Ok(Self {
            kind: scenario.kind(),
            delta: scenario.design.delta,
            probability: scenario.analysis.probability,
            grid_points: scenario.analysis.grid_points,
            updaters: [updater.clone(), updater],
            master_seed,
            scenario_key: scenario.stream_key(),
            replication,
        })
    }

    /// Analyzes the cumulative data of look `stage` (1-based).
    pub fn analyze(&mut self, snapshot: &Snapshot, stage: usize) -> Result<Analysis> {
        if snapshot.control.clusters() == 0 || snapshot.treatment.clusters() == 0 {
            return Err(Error::invalid("analysis needs at least one cluster per arm"));
        }
        match (&snapshot.control, &snapshot.treatment, self.kind) {
            (ArmData::Continuous(c), ArmData::Continuous(t), OutcomeKind::Continuous) => {
                let [uc, ut] = &mut self.updaters;
                let ctrl = uc.observe(c)?;
                let trt = ut.observe(t)?;
                let probability = match self.probability {
                    ProbabilityMode::Exact => normal::prob_superiority_exact(ctrl, trt, self.delta),
                    ProbabilityMode::MonteCarlo { samples } => {
                        let id = StreamId::new(
                            self.scenario_key,
                            self.replication,
                            Arm::Control,
                            Purpose::PosteriorDraws { stage: stage as u32 },
                        );
                        let mut rng = RngStream::new(self.master_seed, id);
                        normal::prob_superiority_mc(ctrl, trt, self.delta, samples, &mut rng)?
                    }
                };
                Ok(Analysis {
                    probability,
                    control: ctrl.into(),
                    treatment: trt.into(),
                })
            }
            (ArmData::Binary(c), ArmData::Binary(t), OutcomeKind::Binary) => {
                let ctrl = beta_binomial::posterior_grid(c, self.grid_points)?;
                let trt = beta_binomial::posterior_grid(t, self.grid_points)?;
                let probability = beta_binomial::prob_risk_diff_exceeds(&trt, &ctrl, self.delta)?;
                Ok(Analysis {
                    probability,
                    control: (&ctrl).into(),
                    treatment: (&trt).into(),
                })
            }
            _ => Err(Error::invalid("snapshot data does not match the scenario outcome kind")),
        }
    }
}

/// One-off analysis of a data snapshot from the design prior.
pub fn analyze_snapshot(snapshot: &Snapshot, scenario: &Scenario, master_seed: u64) -> Result<Analysis> {
    Analyzer::new(scenario, master_seed, 0)?.analyze(snapshot, 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    /// 1-based look index.
    pub stage: usize,
    /// Clusters per arm.
    pub clusters: usize,
    /// Participants per arm.
    pub participants: usize,
    pub probability: f64,
    pub control: ArmSummary,
    pub treatment: ArmSummary,
}

/// Where a trial's random numbers came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: u64,
    pub scenario_key: u64,
    pub replication: u64,
}

impl Provenance {
    pub fn stream(&self, arm: Arm, purpose: Purpose) -> StreamId {
        StreamId::new(self.scenario_key, self.replication, arm, purpose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Look at which the trial ended (1-based).
    pub stopped_stage: usize,
    pub efficacy_declared: bool,
    /// Records of the looks actually performed.
    pub stages: Vec<StageRecord>,
    pub provenance: Provenance,
}

impl TrialResult {
    pub fn probabilities(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.probability).collect()
    }

    pub fn clusters_per_arm(&self) -> usize {
        self.stages.last().map_or(0, |s| s.clusters)
    }

    pub fn participants_per_arm(&self) -> usize {
        self.stages.last().map_or(0, |s| s.participants)
    }

    /// Re-applies the stopping rule to the recorded probabilities.
    pub fn replay(&self, boundary: f64) -> (usize, bool) {
        match self.stages.iter().position(|s| s.probability > boundary) {
            Some(i) => (i + 1, true),
            None => (self.stages.len(), false),
        }
    }
}

/// Final cluster states of both arms.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialData {
    Continuous {
        control: Vec<ContinuousCluster>,
        treatment: Vec<ContinuousCluster>,
    },
    Binary {
        control: Vec<BinaryCluster>,
        treatment: Vec<BinaryCluster>,
    },
}

enum Clusters {
    Continuous(Vec<ContinuousCluster>),
    Binary(Vec<BinaryCluster>),
}

struct ArmState {
    arm: Arm,
    parameter: f64,
    latent_rng: RngStream,
    observation_rngs: Vec<RngStream>,
    clusters: Clusters,
}

impl ArmState {
    fn new(arm: Arm, scenario: &Scenario, provenance: Provenance) -> Self {
        let parameter = match arm {
            Arm::Control => scenario.outcome.control_parameter(),
            Arm::Treatment => scenario.outcome.treatment_parameter(),
        };
        let clusters = match scenario.kind() {
            OutcomeKind::Continuous => Clusters::Continuous(Vec::new()),
            OutcomeKind::Binary => Clusters::Binary(Vec::new()),
        };
        Self {
            arm,
            parameter,
            latent_rng: RngStream::new(provenance.master_seed, provenance.stream(arm, Purpose::ClusterLatent)),
            observation_rngs: Vec::new(),
            clusters,
        }
    }

    fn enroll(&mut self, outcome: &OutcomeSpec, sigma_b2: f64, sizes: &[usize], provenance: Provenance) -> Result<()> {
        while self.observation_rngs.len() < sizes.len() {
            let j = self.observation_rngs.len() as u32;
            let id = provenance.stream(self.arm, Purpose::Observations { cluster: j });
            self.observation_rngs.push(RngStream::new(provenance.master_seed, id));
            match (&mut self.clusters, outcome) {
                (Clusters::Continuous(cs), _) => {
                    cs.push(ContinuousCluster::spawn(self.parameter, sigma_b2, &mut self.latent_rng)?)
                }
                (Clusters::Binary(cs), OutcomeSpec::Binary { rho, .. }) => {
                    cs.push(BinaryCluster::spawn(self.parameter, *rho, &mut self.latent_rng)?)
                }
                _ => unreachable!("cluster kind follows the outcome kind"),
            }
        }
        for (j, &target) in sizes.iter().enumerate() {
            let rng = &mut self.observation_rngs[j];
            match (&mut self.clusters, outcome) {
                (Clusters::Continuous(cs), OutcomeSpec::Continuous { sigma_w2, .. }) => {
                    let have = cs[j].size();
                    if target > have {
                        cs[j].extend(target - have, *sigma_w2, rng)?;
                    }
                }
                (Clusters::Binary(cs), _) => {
                    let have = cs[j].size as usize;
                    if target > have {
                        cs[j].extend(target - have, rng)?;
                    }
                }
                _ => unreachable!("cluster kind follows the outcome kind"),
            }
        }
        Ok(())
    }

    fn data(&self, scenario: &Scenario) -> Result<ArmData> {
        Ok(match &self.clusters {
            Clusters::Continuous(cs) => {
                let OutcomeSpec::Continuous { sigma_w2, .. } = scenario.outcome else {
                    unreachable!()
                };
                let mut stats = ClusterStats::new(sigma_w2, scenario.sigma_b2.unwrap_or(0.0));
                for c in cs {
                    stats.push(c.size(), c.sum());
                }
                ArmData::Continuous(stats)
            }
            Clusters::Binary(cs) => ArmData::Binary(BinaryArmData::new(
                cs.iter().map(|c| (c.events, c.size)).collect(),
                BinaryArmData::precision_for_icc(scenario.outcome.rho()),
            )?),
        })
    }
}

/// Runs one trial and also returns the final cluster states.
pub fn run_trial_with_data(scenario: &Scenario, master_seed: u64, replication: u64) -> Result<(TrialResult, TrialData)> {
    let provenance = Provenance {
        master_seed,
        scenario_key: scenario.stream_key(),
        replication,
    };
    let sigma_b2 = scenario.sigma_b2.unwrap_or(0.0);
    let mut arms = Arm::BOTH.map(|arm| ArmState::new(arm, scenario, provenance));
    let mut analyzer = Analyzer::new(scenario, master_seed, replication)?;
    let boundary = scenario.design.boundary;

    let mut stages = Vec::with_capacity(scenario.schedule.len());
    let mut efficacy_declared = false;
    for (index, stage) in scenario.schedule.stages.iter().enumerate() {
        let look = index + 1;
        let in_stage = |e: Error| Error::Stage {
            stage: look,
            source: Box::new(e),
        };
        for arm in &mut arms {
            arm.enroll(&scenario.outcome, sigma_b2, &stage.cluster_sizes, provenance)
                .map_err(in_stage)?;
        }
        let snapshot = Snapshot {
            control: arms[0].data(scenario).map_err(in_stage)?,
            treatment: arms[1].data(scenario).map_err(in_stage)?,
        };
        let analysis = analyzer.analyze(&snapshot, look).map_err(in_stage)?;
        stages.push(StageRecord {
            stage: look,
            clusters: stage.cum_clusters,
            participants: stage.participants(),
            probability: analysis.probability,
            control: analysis.control,
            treatment: analysis.treatment,
        });
        if analysis.probability > boundary {
            efficacy_declared = true;
            break;
        }
    }

    let [control, treatment] = arms.map(|a| a.clusters);
    let data = match (control, treatment) {
        (Clusters::Continuous(control), Clusters::Continuous(treatment)) => TrialData::Continuous { control, treatment },
        (Clusters::Binary(control), Clusters::Binary(treatment)) => TrialData::Binary { control, treatment },
        _ => unreachable!("both arms share the outcome kind"),
    };
    let result = TrialResult {
        stopped_stage: stages.len(),
        efficacy_declared,
        stages,
        provenance,
    };
    Ok((result, data))
}

/// Runs one trial of `scenario`; output depends only on
/// `(scenario, master_seed, replication)`.
pub fn run_trial(scenario: &Scenario, master_seed: u64, replication: u64) -> Result<TrialResult> {
    run_trial_with_data(scenario, master_seed, replication).map(|(r, _)| r)
}

pub const TRACE_HEADER: [&str; 10] = [
    "replication",
    "stage",
    "clusters",
    "participants",
    "probability",
    "control_mean",
    "control_var",
    "treatment_mean",
    "treatment_var",
    "stopped",
];

/// Writes per-look trial traces as delimited text.
pub fn write_trace<W: Write>(writer: W, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for t in trials {
        for s in &t.stages {
            let stopped = s.stage == t.stopped_stage && t.efficacy_declared;
            w.write_record(&[
                t.provenance.replication.to_string(),
                s.stage.to_string(),
                s.clusters.to_string(),
                s.participants.to_string(),
                s.probability.to_string(),
                s.control.mean.to_string(),
                s.control.variance.to_string(),
                s.treatment.mean.to_string(),
                s.treatment.variance.to_string(),
                stopped.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Design, DesignSpec};

    fn continuous(effect: f64, rho: f64, design: DesignSpec) -> Scenario {
        Scenario::new(OutcomeSpec::Continuous { mu_c: 0.0, effect, sigma_w2: 1.0, rho }, design).unwrap()
    }

    #[test]
    fn unreachable_boundary_runs_to_final() {
        let s = continuous(0.5, 0.2, DesignSpec::new(Design::Design1, 20, 8, 2, 1.0));
        for rep in 0..10 {
            let r = run_trial(&s, 1, rep).unwrap();
            assert_eq!(r.stopped_stage, 3);
            assert!(!r.efficacy_declared);
        }
    }

    #[test]
    fn design1_interim_uses_half_the_clusters() {
        let s = continuous(0.0, 0.2, DesignSpec::new(Design::Design1, 4, 6, 1, 1.0));
        let (r, data) = run_trial_with_data(&s, 3, 0).unwrap();
        assert_eq!((r.stages[0].clusters, r.stages[0].participants), (2, 12));
        assert_eq!((r.stages[1].clusters, r.stages[1].participants), (4, 24));
        let TrialData::Continuous { control, treatment } = data else { panic!() };
        assert_eq!(control.len(), 4);
        assert!(treatment.iter().all(|c| c.size() == 6));
    }

    #[test]
    fn replay_reproduces_stop() {
        let s = continuous(0.3, 0.2, DesignSpec::new(Design::Design2, 20, 8, 3, 0.9));
        for rep in 0..20 {
            let r = run_trial(&s, 5, rep).unwrap();
            assert_eq!(r.replay(0.9), (r.stopped_stage, r.efficacy_declared));
            let ps = r.probabilities();
            if r.efficacy_declared {
                assert!(ps.last().unwrap() > &0.9);
                assert!(ps[..ps.len() - 1].iter().all(|p| *p <= 0.9));
            } else {
                assert_eq!(r.stopped_stage, 4);
            }
        }
    }

    #[test]
    fn symmetric_snapshot_gives_half() {
        let s = continuous(0.0, 0.2, DesignSpec::new(Design::Design1, 4, 6, 1, 0.95));
        let mut stats = ClusterStats::new(1.0, 0.25);
        stats.push(6, 1.2);
        stats.push(6, -0.4);
        let snap = Snapshot {
            control: ArmData::Continuous(stats.clone()),
            treatment: ArmData::Continuous(stats),
        };
        let a = analyze_snapshot(&snap, &s, 0).unwrap();
        assert!((a.probability - 0.5).abs() < 1e-12);

        let empty = Snapshot {
            control: ArmData::Continuous(ClusterStats::new(1.0, 0.25)),
            treatment: snap.treatment.clone(),
        };
        assert!(analyze_snapshot(&empty, &s, 0).is_err());
    }

    #[test]
    fn binary_trial_runs() {
        let s = Scenario::new(
            OutcomeSpec::Binary { pi_c: 0.35, effect: 0.2, rho: 0.05 },
            DesignSpec::new(Design::Design2, 20, 8, 1, 0.95),
        )
        .unwrap();
        let r = run_trial(&s, 11, 0).unwrap();
        assert!(r.stopped_stage >= 1 && r.stopped_stage <= 2);
        assert!(r.stages.iter().all(|st| (0.0..=1.0).contains(&st.probability)));
    }

    #[test]
    fn trace_columns() {
        let s = continuous(0.0, 0.2, DesignSpec::new(Design::Design1, 4, 6, 1, 1.0));
        let r = run_trial(&s, 3, 0).unwrap();
        let mut out = Vec::new();
        write_trace(&mut out, &[r]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], TRACE_HEADER.join(","));
        assert!(lines[1].starts_with("0,1,2,12,"));
    }
}
