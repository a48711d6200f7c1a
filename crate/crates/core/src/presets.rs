//! Built-in problem instances: three synthetic examples and four instances
//! derived from published data (dose finding, drug selection, two caption
//! contests).
//!
//! Arms are 0-indexed in code; [`describe`] prints them 1-indexed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArmSpec, ConstraintSense, Goal, ModelError, ProblemInstance, TargetEstimate};

pub const PRESET_NAMES: [&str; 7] =
    ["example1", "example2", "example3", "dose_finding", "drug_selection", "caption853", "caption854"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error("unknown preset `{0}` (known: example1, example2, example3, dose_finding, drug_selection, caption853, caption854)")]
    UnknownPreset(String),
    #[error("unknown goal `{0}` (expected bai, eps_good or feasible)")]
    UnknownGoal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Goal family without parameters; presets supply epsilon and thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Bai,
    EpsGood,
    Feasible,
}

impl GoalKind {
    pub const ALL: [GoalKind; 3] = [GoalKind::Bai, GoalKind::EpsGood, GoalKind::Feasible];

    pub fn as_str(&self) -> &'static str {
        match self {
            GoalKind::Bai => "bai",
            GoalKind::EpsGood => "eps_good",
            GoalKind::Feasible => "feasible",
        }
    }

    pub fn of(goal: &Goal) -> Self {
        match goal {
            Goal::BestArm => GoalKind::Bai,
            Goal::EpsilonGood { .. } => GoalKind::EpsGood,
            Goal::Feasibility { .. } => GoalKind::Feasible,
        }
    }
}

impl fmt::Display for GoalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoalKind {
    type Err = PresetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bai" | "best_arm" => Ok(GoalKind::Bai),
            "eps_good" | "epsilon_good" => Ok(GoalKind::EpsGood),
            "feasible" | "feasibility" => Ok(GoalKind::Feasible),
            _ => Err(PresetError::UnknownGoal(s.to_string())),
        }
    }
}

const EX1_M1: [f64; 10] = [0.1927, 0.6438, 3.0594, 3.0220, 1.3753, 1.4215, 0.9108, 1.0126, 0.1119, 1.8808];
const EX1_M2: [f64; 10] = [0.4350, 0.7240, 1.1566, 0.8560, 3.4712, 0.8248, 3.8797, 1.9819, 3.2431, 1.4315];

const DRUG_MEANS: [f64; 5] = [5.8676, 5.6469, 5.8765, 5.8298, 5.6332];
const DRUG_VARS: [f64; 5] = [3.2756, 3.4171, 3.2727, 3.3198, 3.3251];

const C853_MEANS: [f64; 10] = [1.1400, 1.0779, 1.4160, 1.0779, 1.1081, 1.1467, 1.1333, 1.1075, 1.1026, 1.4900];
const C853_VARS: [f64; 10] = [0.1418, 0.0991, 0.4871, 0.0728, 0.0977, 0.1809, 0.1843, 0.0970, 0.0932, 0.4843];

const C854_MEANS: [f64; 10] = [1.1986, 1.1890, 1.1400, 1.2621, 1.1544, 1.0339, 1.1349, 1.2786, 1.1765, 1.1367];
const C854_VARS: [f64; 10] = [0.1879, 0.2279, 0.1346, 0.3186, 0.1314, 0.0330, 0.1337, 0.3167, 0.1858, 0.1478];

/// Arms, epsilon, thresholds and constraint senses of one preset.
struct Spec {
    arms: Vec<ArmSpec>,
    epsilon: f64,
    thresholds: Vec<f64>,
    senses: Vec<ConstraintSense>,
}

fn two_measure(m1: &[f64], m2: &[f64], sd: impl Fn(usize) -> f64) -> Vec<ArmSpec> {
    m1.iter().zip(m2).enumerate().map(|(i, (&a, &b))| ArmSpec::new(vec![a, b], vec![sd(i), sd(i)])).collect()
}

fn one_measure(means: &[f64], vars: &[f64]) -> Vec<ArmSpec> {
    means.iter().zip(vars).map(|(&m, &v)| ArmSpec::scalar(m, v.sqrt())).collect()
}

fn spec(name: &str) -> Result<Spec, PresetError> {
    use ConstraintSense::{Ge, Le};
    Ok(match name {
        "example1" => Spec {
            arms: two_measure(&EX1_M1, &EX1_M2, |_| 1.0),
            epsilon: 0.1,
            thresholds: vec![2.0, 2.0],
            senses: vec![Le, Le],
        },
        // noise variance 4 on both measures of arms 1-5
        "example2" => Spec {
            arms: two_measure(&EX1_M1, &EX1_M2, |i| if i < 5 { 2.0 } else { 1.0 }),
            epsilon: 0.1,
            thresholds: vec![2.0, 2.0],
            senses: vec![Le, Le],
        },
        "example3" => {
            let m1: Vec<f64> = (1..=10).map(|x| -0.05 * (x * x) as f64).collect();
            let m2: Vec<f64> =
                (1..=10).map(|x| if x <= 6 { -0.06 * (7 - x) as f64 } else { 0.06 * (x - 6) as f64 }).collect();
            Spec { arms: two_measure(&m1, &m2, |_| 1.0), epsilon: 0.5, thresholds: vec![-0.5, 0.0], senses: vec![Ge, Le] }
        }
        "dose_finding" => Spec {
            arms: two_measure(&[0.151, 0.184, 0.209, 0.171, 0.06], &[0.259, 0.184, 0.209, 0.293, 0.16], |_| 0.5),
            epsilon: 0.03,
            thresholds: vec![0.18, 0.25],
            senses: vec![Ge, Le],
        },
        "drug_selection" => Spec {
            arms: one_measure(&DRUG_MEANS, &DRUG_VARS),
            epsilon: 0.003,
            thresholds: vec![5.6],
            senses: vec![Ge],
        },
        "caption853" => Spec {
            arms: one_measure(&C853_MEANS, &C853_VARS),
            epsilon: 0.1,
            thresholds: vec![1.4],
            senses: vec![Ge],
        },
        "caption854" => Spec {
            arms: one_measure(&C854_MEANS, &C854_VARS),
            epsilon: 0.05,
            thresholds: vec![1.25],
            senses: vec![Ge],
        },
        _ => return Err(PresetError::UnknownPreset(name.to_string())),
    })
}

/// The named preset posed as `goal`. Best-arm and epsilon-good problems rank
/// on the first measure; feasibility uses every measure, with `>=`
/// constraints stored negated.
pub fn preset(name: &str, goal: GoalKind) -> Result<ProblemInstance, PresetError> {
    let s = spec(name)?;
    Ok(match goal {
        GoalKind::Bai => ProblemInstance::new(s.arms, Goal::BestArm, 0)?,
        GoalKind::EpsGood => ProblemInstance::new(s.arms, Goal::EpsilonGood { epsilon: s.epsilon }, 0)?,
        GoalKind::Feasible => ProblemInstance::feasibility_with_senses(s.arms, s.thresholds, &s.senses)?,
    })
}

/// One-line ground-truth summary, e.g. `example1 bai best_arm=3`.
pub fn describe(name: &str, instance: &ProblemInstance) -> String {
    let goal = GoalKind::of(instance.goal());
    let join = |arms: &[usize]| arms.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join(",");
    let truth = match instance.true_target() {
        TargetEstimate::BestArm { best } => format!("best_arm={}", best + 1),
        TargetEstimate::EpsilonGood { good, .. } => format!("good_arms={}", join(&good)),
        TargetEstimate::Feasibility(ctx) => format!("feasible_arms={}", join(&ctx.feasible)),
    };
    format!("{name} {goal} {truth}")
}
