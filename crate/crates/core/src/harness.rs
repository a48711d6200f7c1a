//! Macro-replication experiments: PFS against budget for a set of policies
//! on one problem instance.
//!
//! Every replication owns a generator seeded from
//! `(base_seed, policy, replication index)` alone, so results do not depend
//! on how replications are scheduled across workers.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArmSpec, ConstraintSense, Goal, ModelError, PosteriorState, ProblemInstance};
use crate::par::ordered_map;
use crate::policy::{select_arm_unchecked, Policy, PolicyError};
use crate::presets::{preset, GoalKind, PresetError};
use crate::rates::{self, empirical_rate};

/// The only generator the config schema accepts.
pub const GENERATOR: &str = "chacha8";

pub const RESULTS_HEADER: &str = "policy,goal,preset,budget,pfs,ci_low,ci_high,reps";
pub const RATES_HEADER: &str = "policy,preset,arm,empirical_rate,theoretical_rate";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A custom instance as written in a JSON file.
///
/// For feasibility goals, `senses` optionally marks measures whose
/// constraint reads `mu >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub arms: Vec<ArmSpec>,
    pub goal: Goal,
    #[serde(default)]
    pub ranking_measure: usize,
    #[serde(default)]
    pub senses: Option<Vec<ConstraintSense>>,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance, ExperimentError> {
        Ok(match (&self.goal, &self.senses) {
            (Goal::Feasibility { thresholds }, Some(senses)) => {
                ProblemInstance::feasibility_with_senses(self.arms.clone(), thresholds.clone(), senses)?
            }
            (_, Some(_)) => return Err(ExperimentError::Config("`senses` only applies to feasibility goals".into())),
            (goal, None) => ProblemInstance::new(self.arms.clone(), goal.clone(), self.ranking_measure)?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn default_n0() -> u64 {
    2
}

fn default_generator() -> String {
    GENERATOR.to_string()
}

/// Experiment description; the JSON config file deserializes into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in instance name; exclusive with `instance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceSpec>,
    /// Required with `preset`; must agree with the instance goal otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalKind>,
    pub policies: Vec<Policy>,
    /// Checkpoints, strictly increasing.
    pub budgets: Vec<u64>,
    pub macro_reps: u64,
    /// Initial pulls per arm.
    #[serde(default = "default_n0")]
    pub n0: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker count hint; 0 picks automatically. Never changes the output.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_generator")]
    pub generator: String,
}

impl ExperimentConfig {
    pub fn for_preset(name: &str, goal: GoalKind, policies: Vec<Policy>, budgets: Vec<u64>, macro_reps: u64) -> Self {
        Self {
            preset: Some(name.to_string()),
            instance: None,
            goal: Some(goal),
            policies,
            budgets,
            macro_reps,
            n0: default_n0(),
            base_seed: 0,
            threads: 0,
            generator: default_generator(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Label used in CSV output.
    pub fn label(&self) -> &str {
        self.preset.as_deref().unwrap_or("custom")
    }

    /// Checks every invariant and builds the instance.
    pub fn resolve(&self) -> Result<ProblemInstance, ExperimentError> {
        let cfg = |msg: String| Err(ExperimentError::Config(msg));
        if self.generator != GENERATOR {
            return cfg(format!("unsupported generator `{}` (only `{GENERATOR}`)", self.generator));
        }
        let instance = match (&self.preset, &self.instance) {
            (Some(name), None) => {
                let Some(goal) = self.goal else { return cfg("`goal` is required with `preset`".into()) };
                preset(name, goal)?
            }
            (None, Some(spec)) => {
                let inst = spec.build()?;
                if let Some(goal) = self.goal {
                    if goal != GoalKind::of(inst.goal()) {
                        return cfg(format!("`goal` {goal} disagrees with the instance goal"));
                    }
                }
                inst
            }
            _ => return cfg("exactly one of `preset` and `instance` must be given".into()),
        };
        if self.policies.is_empty() {
            return cfg("`policies` is empty".into());
        }
        for p in &self.policies {
            p.check_goal(instance.goal())?;
        }
        if self.macro_reps == 0 {
            return cfg("`macro_reps` must be at least 1".into());
        }
        if self.n0 == 0 {
            return cfg("`n0` must be at least 1".into());
        }
        let Some(&first) = self.budgets.first() else { return cfg("`budgets` is empty".into()) };
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return cfg("`budgets` must be strictly increasing".into());
        }
        let init = instance.num_arms() as u64 * self.n0;
        if first < init {
            return cfg(format!("first budget {first} is below k * n0 = {init}"));
        }
        Ok(instance)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of one replication:
/// `splitmix64(splitmix64(splitmix64(base) ^ fnv1a(policy)) ^ rep)`,
/// with `policy` in its string form.
pub fn replication_seed(base_seed: u64, policy: &Policy, rep: u64) -> u64 {
    let id = fnv1a(policy.to_string().as_bytes());
    splitmix64(splitmix64(splitmix64(base_seed) ^ id) ^ rep)
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replication {
    /// Whether the estimated target was right, one entry per checkpoint.
    pub correct: Vec<bool>,
    /// Pull counts at the last checkpoint.
    pub pulls: Vec<u64>,
}

/// Runs one replication: `n0` round-robin pulls of every arm, then the
/// policy until the last checkpoint, checking the estimate at each one.
///
/// `checkpoints` must be strictly increasing and start at or above `k * n0`.
pub fn run_replication(
    instance: &ProblemInstance,
    policy: &Policy,
    checkpoints: &[u64],
    n0: u64,
    seed: u64,
) -> Replication {
    let k = instance.num_arms();
    let goal = instance.goal();
    let measure = instance.ranking_measure();
    let truth = instance.true_target();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PosteriorState::new(instance);
    let mut sample = vec![0.0; instance.num_measures()];
    let mut pull = |state: &mut PosteriorState, arm: usize, rng: &mut ChaCha8Rng| {
        instance.draw_sample_into(arm, rng, &mut sample).expect("arm in range");
        state.update(arm, &sample).expect("sample shape");
    };
    for _ in 0..n0 {
        for arm in 0..k {
            pull(&mut state, arm, &mut rng);
        }
    }
    let mut correct = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        while state.round() < n {
            let arm = select_arm_unchecked(policy, &state, goal, measure, &mut rng);
            pull(&mut state, arm, &mut rng);
        }
        let est = state.target_estimate(goal, measure).expect("all arms sampled");
        correct.push(est.same_selection(&truth));
    }
    Replication { correct, pulls: state.pulls().to_vec() }
}

/// Failures at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfsPoint {
    pub budget: u64,
    pub failures: u64,
    pub reps: u64,
}

impl PfsPoint {
    pub fn pfs(&self) -> f64 {
        self.failures as f64 / self.reps as f64
    }

    /// Normal-approximation 95% half-width, `1.96 sqrt(p (1 - p) / reps)`.
    pub fn ci_half_width(&self) -> f64 {
        let p = self.pfs();
        1.96 * (p * (1.0 - p) / self.reps as f64).sqrt()
    }

    /// Interval clipped to `[0, 1]`.
    pub fn ci(&self) -> (f64, f64) {
        let (p, h) = (self.pfs(), self.ci_half_width());
        ((p - h).max(0.0), (p + h).min(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub policy: Policy,
    pub points: Vec<PfsPoint>,
    /// `T_{n,i} / n` at the last checkpoint, averaged over replications.
    pub mean_sampling_rates: Vec<f64>,
}

impl PolicyResult {
    /// Decay rate fitted to this policy's PFS curve, if there are enough
    /// nonzero points.
    pub fn empirical_rate(&self) -> Option<f64> {
        let curve: Vec<(f64, f64)> = self.points.iter().map(|p| (p.budget as f64, p.pfs())).collect();
        empirical_rate(&curve).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub label: String,
    pub goal: GoalKind,
    pub instance: ProblemInstance,
    pub policies: Vec<PolicyResult>,
}

impl ExperimentResult {
    pub fn policy(&self, policy: &Policy) -> Option<&PolicyResult> {
        self.policies.iter().find(|r| r.policy == *policy)
    }
}

/// Runs every policy for `macro_reps` replications.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    let instance = config.resolve()?;
    let k = instance.num_arms();
    let last = *config.budgets.last().expect("validated") as f64;
    let mut policies = Vec::with_capacity(config.policies.len());
    for policy in &config.policies {
        let reps = ordered_map(config.macro_reps as usize, config.threads, |rep| {
            let seed = replication_seed(config.base_seed, policy, rep as u64);
            run_replication(&instance, policy, &config.budgets, config.n0, seed)
        });
        let points = config
            .budgets
            .iter()
            .enumerate()
            .map(|(c, &budget)| PfsPoint {
                budget,
                failures: reps.iter().filter(|r| !r.correct[c]).count() as u64,
                reps: config.macro_reps,
            })
            .collect();
        let mut rates = vec![0.0; k];
        for r in &reps {
            for (acc, &t) in rates.iter_mut().zip(&r.pulls) {
                *acc += t as f64 / last;
            }
        }
        rates.iter_mut().for_each(|x| *x /= config.macro_reps as f64);
        policies.push(PolicyResult { policy: *policy, points, mean_sampling_rates: rates });
    }
    Ok(ExperimentResult {
        label: config.label().to_string(),
        goal: GoalKind::of(instance.goal()),
        instance,
        policies,
    })
}

/// Limiting allocation of `policy` on `instance`, where one is known.
pub fn theoretical_allocation(instance: &ProblemInstance, policy: &Policy) -> Option<Vec<f64>> {
    let k = instance.num_arms();
    let alloc = match (policy, instance.goal()) {
        (Policy::Equal, _) => return Some(vec![1.0 / k as f64; k]),
        (Policy::Kg, Goal::BestArm) => rates::gamma_kg(instance),
        (Policy::Ttei { beta }, Goal::BestArm) => rates::gamma_ttei(instance, *beta),
        (Policy::Ikg, Goal::BestArm) | (Policy::IkgEps, Goal::EpsilonGood { .. }) => {
            rates::solve_optimal_allocation(instance)
        }
        (Policy::IkgF, Goal::Feasibility { .. }) => rates::gamma_feasibility(instance),
        _ => return None,
    };
    match alloc {
        Ok(a) => Some(a.w),
        Err(e) => {
            log::warn!("no theoretical allocation for {policy}: {e}");
            None
        }
    }
}

/// `policy,goal,preset,budget,pfs,ci_low,ci_high,reps`, one row per checkpoint.
pub fn results_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for pr in &result.policies {
        for p in &pr.points {
            let (lo, hi) = p.ci();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                pr.policy,
                result.goal,
                result.label,
                p.budget,
                p.pfs(),
                lo,
                hi,
                p.reps
            );
        }
    }
    out
}

/// `policy,preset,arm,empirical_rate,theoretical_rate` with 1-indexed arms;
/// `theoretical_rate` is empty where no limit is known.
pub fn sampling_rates_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(RATES_HEADER);
    out.push('\n');
    for pr in &result.policies {
        let theory = theoretical_allocation(&result.instance, &pr.policy);
        for (i, w) in pr.mean_sampling_rates.iter().enumerate() {
            let t = theory.as_ref().map(|t| t[i].to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", pr.policy, result.label, i + 1, w, t);
        }
    }
    out
}

/// Writes `results.csv` and `sampling_rates.csv` into `dir`, creating it.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in [("results.csv", results_csv(result)), ("sampling_rates.csv", sampling_rates_csv(result))] {
        let mut f = io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        f.write_all(body.as_bytes())?;
        f.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm() -> ProblemInstance {
        ProblemInstance::new(vec![ArmSpec::scalar(1.0, 1.0), ArmSpec::scalar(0.0, 1.0)], Goal::BestArm, 0).unwrap()
    }

    fn config(policies: Vec<Policy>, budgets: Vec<u64>, reps: u64) -> ExperimentConfig {
        ExperimentConfig {
            preset: None,
            instance: Some(InstanceSpec {
                arms: two_arm().arms().to_vec(),
                goal: Goal::BestArm,
                ranking_measure: 0,
                senses: None,
            }),
            goal: None,
            policies,
            budgets,
            macro_reps: reps,
            n0: 2,
            base_seed: 7,
            threads: 1,
            generator: GENERATOR.into(),
        }
    }

    #[test]
    fn seeds_differ_by_policy_and_rep() {
        let a = replication_seed(1, &Policy::Ikg, 0);
        assert_ne!(a, replication_seed(1, &Policy::Kg, 0));
        assert_ne!(a, replication_seed(1, &Policy::Ikg, 1));
        assert_ne!(a, replication_seed(2, &Policy::Ikg, 0));
        assert_eq!(a, replication_seed(1, &Policy::Ikg, 0));
    }

    #[test]
    fn budget_at_init_uses_only_initial_samples() {
        let inst = two_arm();
        let r = run_replication(&inst, &Policy::Ikg, &[4], 2, 3);
        assert_eq!(r.pulls, vec![2, 2]);
    }

    #[test]
    fn replication_is_deterministic() {
        let inst = two_arm();
        let a = run_replication(&inst, &Policy::Ttei { beta: 0.5 }, &[10, 50, 100], 2, 11);
        let b = run_replication(&inst, &Policy::Ttei { beta: 0.5 }, &[10, 50, 100], 2, 11);
        assert_eq!(a, b);
        assert_eq!(a.pulls.iter().sum::<u64>(), 100);
    }

    #[test]
    fn single_rep_pfs_is_zero_or_one() {
        let res = run_experiment(&config(vec![Policy::Equal], vec![4, 20], 1)).unwrap();
        for p in &res.policies[0].points {
            assert!(p.pfs() == 0.0 || p.pfs() == 1.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(vec![Policy::Ikg], vec![3], 5).resolve().is_err());
        assert!(config(vec![Policy::Ikg], vec![10, 10], 5).resolve().is_err());
        assert!(config(vec![Policy::Ikg], vec![10], 0).resolve().is_err());
        assert!(config(vec![Policy::IkgF], vec![10], 5).resolve().is_err());
        assert!(config(vec![], vec![10], 5).resolve().is_err());
        let mut c = config(vec![Policy::Ikg], vec![10], 5);
        c.generator = "pcg".into();
        assert!(c.resolve().is_err());
        c.generator = GENERATOR.into();
        c.preset = Some("example1".into());
        assert!(c.resolve().is_err());
        let json = r#"{"preset":"example1","goal":"bai","policies":["ikg"],"budgets":[20],"macro_reps":1,"extra":1}"#;
        assert!(ExperimentConfig::from_json(json).is_err());
    }

    #[test]
    fn ci_is_clipped() {
        let p = PfsPoint { budget: 1, failures: 1, reps: 10 };
        assert_eq!(p.ci().0, 0.0);
        assert!((p.ci_half_width() - 1.96 * (0.09f64 / 10.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_shapes() {
        let res = run_experiment(&config(vec![Policy::Ikg, Policy::Ei], vec![10, 20], 3)).unwrap();
        let csv = results_csv(&res);
        assert_eq!(csv.lines().next(), Some(RESULTS_HEADER));
        assert_eq!(csv.lines().count(), 1 + 4);
        let rates = sampling_rates_csv(&res);
        let rows: Vec<&str> = rates.lines().collect();
        assert_eq!(rows[0], RATES_HEADER);
        assert!(rows[1].starts_with("ikg,custom,1,"));
        assert!(rows[3].ends_with(','), "EI has no theoretical rate: {}", rows[3]);
    }
}
