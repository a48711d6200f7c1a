//! Sampling policies for best-arm identification and their acquisition values.
//!
//! All values are computed in log space and compared there, so selection
//! stays meaningful long after the raw values underflow.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Goal, ModelError, PosteriorState, TargetEstimate};
use crate::normal::{log_exp_diff, log_expected_positive_part, log_sum_exp};
use crate::variants;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("TTEI beta must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("policy {policy} cannot be used for goal {goal}")]
    GoalMismatch { policy: String, goal: &'static str },
    #[error("target estimate does not match the policy's goal")]
    TargetKind,
    #[error("feasibility context is inconsistent with the posterior")]
    InconsistentContext,
    #[error("unknown policy '{0}'")]
    Unknown(String),
}

/// A sampling rule.
///
/// String form (used in configs and CSV output): `kg`, `ikg`, `ei`,
/// `ttei` (beta = 0.5), `ttei(<beta>)`, `equal`, `ikg_eps`, `ikg_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    Kg,
    Ikg,
    Ei,
    Ttei { beta: f64 },
    Equal,
    /// iKG for epsilon-good identification; epsilon comes from the goal.
    IkgEps,
    /// iKG for feasible-arm identification; thresholds come from the goal.
    IkgF,
}

impl Policy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if let Policy::Ttei { beta } = self {
            if !(*beta > 0.0 && *beta < 1.0) {
                return Err(PolicyError::Beta(*beta));
            }
        }
        Ok(())
    }

    /// Whether the policy knows how to sample for `goal`.
    pub fn supports(&self, goal: &Goal) -> bool {
        match self {
            Policy::Equal => true,
            Policy::Kg | Policy::Ikg | Policy::Ei | Policy::Ttei { .. } => matches!(goal, Goal::BestArm),
            Policy::IkgEps => matches!(goal, Goal::EpsilonGood { .. }),
            Policy::IkgF => matches!(goal, Goal::Feasibility { .. }),
        }
    }

    pub fn check_goal(&self, goal: &Goal) -> Result<(), PolicyError> {
        self.validate()?;
        if self.supports(goal) {
            Ok(())
        } else {
            Err(PolicyError::GoalMismatch { policy: self.to_string(), goal: goal.short_name() })
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Kg => write!(f, "kg"),
            Policy::Ikg => write!(f, "ikg"),
            Policy::Ei => write!(f, "ei"),
            Policy::Ttei { beta } => write!(f, "ttei({beta})"),
            Policy::Equal => write!(f, "equal"),
            Policy::IkgEps => write!(f, "ikg_eps"),
            Policy::IkgF => write!(f, "ikg_f"),
        }
    }
}

impl FromStr for Policy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = match s.trim() {
            "kg" => Policy::Kg,
            "ikg" => Policy::Ikg,
            "ei" => Policy::Ei,
            "ttei" => Policy::Ttei { beta: 0.5 },
            "equal" => Policy::Equal,
            "ikg_eps" => Policy::IkgEps,
            "ikg_f" => Policy::IkgF,
            other => {
                let beta = other
                    .strip_prefix("ttei(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|b| b.trim().parse::<f64>().ok())
                    .ok_or_else(|| PolicyError::Unknown(other.to_string()))?;
                Policy::Ttei { beta }
            }
        };
        p.validate()?;
        Ok(p)
    }
}

impl TryFrom<String> for Policy {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

/// Index of the largest and the second largest value of a measure.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TopTwo {
    pub first: usize,
    pub second: usize,
}

impl TopTwo {
    pub fn of(state: &PosteriorState, measure: usize) -> Self {
        let k = state.num_arms();
        let (mut first, mut second) = if state.mean(1, measure) > state.mean(0, measure) { (1, 0) } else { (0, 1) };
        for i in 2..k {
            let v = state.mean(i, measure);
            if v > state.mean(first, measure) {
                second = first;
                first = i;
            } else if v > state.mean(second, measure) {
                second = i;
            }
        }
        Self { first, second }
    }

    /// Largest mean among arms other than `arm`.
    pub fn best_other(&self, state: &PosteriorState, measure: usize, arm: usize) -> f64 {
        if arm == self.first {
            state.mean(self.second, measure)
        } else {
            state.mean(self.first, measure)
        }
    }
}

/// `ln iKG` with every mean gap shifted by `shift` (0 for best-arm, epsilon
/// for epsilon-good).
pub(crate) fn ikg_log_shifted(state: &PosteriorState, measure: usize, arm: usize, leader: usize, shift: f64) -> f64 {
    let lead_mean = state.mean(leader, measure);
    let lead_var = state.var(leader, measure);
    if arm != leader {
        let gap = state.mean(arm, measure) - lead_mean + shift;
        let v = state.var(arm, measure);
        let (next, shift_var) = state.lookahead_unchecked(arm, measure);
        let g2 = 0.5 * gap * gap;
        log_exp_diff(g2 / (v + lead_var), g2 / (next + shift_var + lead_var))
    } else {
        let (next, shift_var) = state.lookahead_unchecked(leader, measure);
        let lead_ahead = next + shift_var;
        log_sum_exp((0..state.num_arms()).filter(|&i| i != leader).map(|i| {
            let gap = state.mean(i, measure) - lead_mean + shift;
            let v = state.var(i, measure);
            let g2 = 0.5 * gap * gap;
            log_exp_diff(g2 / (v + lead_var), g2 / (v + lead_ahead))
        }))
    }
}

pub(crate) fn kg_log(state: &PosteriorState, measure: usize, arm: usize, top: &TopTwo) -> f64 {
    let (next, _) = state.lookahead_unchecked(arm, measure);
    let s2 = state.var(arm, measure) - next;
    let s = s2.sqrt();
    let diff = (state.mean(arm, measure) - top.best_other(state, measure, arm)).abs();
    s.ln() + log_expected_positive_part(-diff / s)
}

pub(crate) fn ei_log(state: &PosteriorState, measure: usize, arm: usize, top: &TopTwo) -> f64 {
    let sd = state.var(arm, measure).sqrt();
    let z = (state.mean(arm, measure) - top.best_other(state, measure, arm)) / sd;
    sd.ln() + log_expected_positive_part(z)
}

/// `ln E[(theta_j - theta_leader)^+]` with both posteriors random.
fn pairwise_ei_log(state: &PosteriorState, measure: usize, arm: usize, leader: usize) -> f64 {
    let sd = (state.var(arm, measure) + state.var(leader, measure)).sqrt();
    let z = (state.mean(arm, measure) - state.mean(leader, measure)) / sd;
    sd.ln() + log_expected_positive_part(z)
}

fn leader_of(target: &TargetEstimate) -> Result<usize, PolicyError> {
    match target {
        TargetEstimate::BestArm { best } => Ok(*best),
        _ => Err(PolicyError::TargetKind),
    }
}

fn check_arm(state: &PosteriorState, arm: usize) -> Result<(), PolicyError> {
    if arm >= state.num_arms() {
        return Err(ModelError::ArmIndex { arm, k: state.num_arms() }.into());
    }
    state.check_all_sampled()?;
    Ok(())
}

/// Improvement in the Bonferroni-approximated probability of correct
/// selection from one more sample of `arm`, with the leader held fixed.
pub fn ikg_value(state: &PosteriorState, measure: usize, arm: usize, target: &TargetEstimate) -> Result<f64, PolicyError> {
    check_arm(state, arm)?;
    let leader = leader_of(target)?;
    Ok(ikg_log_shifted(state, measure, arm, leader, 0.0).exp())
}

/// Knowledge gradient: expected one-step increase of the largest posterior mean.
pub fn kg_value(state: &PosteriorState, measure: usize, arm: usize) -> Result<f64, PolicyError> {
    check_arm(state, arm)?;
    Ok(kg_log(state, measure, arm, &TopTwo::of(state, measure)).exp())
}

/// Expected improvement of `theta_arm` over the best other posterior mean.
pub fn ei_value(state: &PosteriorState, measure: usize, arm: usize) -> Result<f64, PolicyError> {
    check_arm(state, arm)?;
    Ok(ei_log(state, measure, arm, &TopTwo::of(state, measure)).exp())
}

/// Lowest index attaining the largest score.
#[inline]
pub(crate) fn argmax_by(k: usize, mut score: impl FnMut(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_score = score(0);
    for i in 1..k {
        let s = score(i);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Leader and challenger of the top-two expected-improvement rule.
pub fn ttei_candidates(state: &PosteriorState, measure: usize) -> (usize, usize) {
    let top = TopTwo::of(state, measure);
    let k = state.num_arms();
    let leader = argmax_by(k, |i| ei_log(state, measure, i, &top));
    let challenger = argmax_by(k, |i| {
        if i == leader {
            f64::NEG_INFINITY
        } else {
            pairwise_ei_log(state, measure, i, leader)
        }
    });
    (leader, challenger)
}

/// Next arm to pull under `policy`.
///
/// Every arm must have been sampled at least once. Only TTEI consumes
/// randomness (one uniform draw per call).
pub fn select_arm<R: Rng + ?Sized>(
    policy: &Policy,
    state: &PosteriorState,
    goal: &Goal,
    measure: usize,
    rng: &mut R,
) -> Result<usize, PolicyError> {
    policy.check_goal(goal)?;
    state.check_all_sampled()?;
    Ok(select_arm_unchecked(policy, state, goal, measure, rng))
}

pub(crate) fn select_arm_unchecked<R: Rng + ?Sized>(
    policy: &Policy,
    state: &PosteriorState,
    goal: &Goal,
    measure: usize,
    rng: &mut R,
) -> usize {
    let k = state.num_arms();
    match policy {
        Policy::Equal => (state.round() % k as u64) as usize,
        Policy::Ikg => {
            let leader = TopTwo::of(state, measure).first;
            argmax_by(k, |i| ikg_log_shifted(state, measure, i, leader, 0.0))
        }
        Policy::Kg => {
            let top = TopTwo::of(state, measure);
            argmax_by(k, |i| kg_log(state, measure, i, &top))
        }
        Policy::Ei => {
            let top = TopTwo::of(state, measure);
            argmax_by(k, |i| ei_log(state, measure, i, &top))
        }
        Policy::Ttei { beta } => {
            let (leader, challenger) = ttei_candidates(state, measure);
            if rng.random::<f64>() < *beta {
                leader
            } else {
                challenger
            }
        }
        Policy::IkgEps | Policy::IkgF => variants::select_variant_unchecked(policy, state, goal, measure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArmSpec, ProblemInstance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Builds a posterior with the given per-arm (mean, pulls, noise std).
    pub(crate) fn frozen(arms: &[(f64, u64, f64)]) -> PosteriorState {
        let specs = arms.iter().enumerate().map(|(i, a)| ArmSpec::scalar(i as f64, a.2)).collect();
        let inst = ProblemInstance::new(specs, Goal::BestArm, 0).unwrap();
        let mut st = PosteriorState::new(&inst);
        for (i, &(mu, t, _)) in arms.iter().enumerate() {
            for _ in 0..t {
                st.update(i, &[mu]).unwrap();
            }
        }
        st
    }

    #[test]
    fn policy_strings_round_trip() {
        for p in [Policy::Kg, Policy::Ikg, Policy::Ei, Policy::Ttei { beta: 0.25 }, Policy::Equal, Policy::IkgEps, Policy::IkgF] {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert_eq!("ttei".parse::<Policy>().unwrap(), Policy::Ttei { beta: 0.5 });
        assert_eq!("ttei(1.5)".parse::<Policy>(), Err(PolicyError::Beta(1.5)));
        assert!(matches!("ucb".parse::<Policy>(), Err(PolicyError::Unknown(_))));
    }

    #[test]
    fn ikg_zero_gap_is_zero() {
        let st = frozen(&[(1.0, 4, 1.0), (1.0, 6, 1.0), (0.0, 3, 1.0)]);
        let target = TargetEstimate::BestArm { best: 0 };
        assert_eq!(ikg_value(&st, 0, 1, &target).unwrap(), 0.0);
    }

    #[test]
    fn ikg_two_arm_value() {
        let st = frozen(&[(1.0, 10, 1.0), (0.0, 10, 1.0)]);
        let target = TargetEstimate::BestArm { best: 0 };
        let v = ikg_value(&st, 0, 1, &target).unwrap();
        // count form: lookahead variance (T+2)/(T+1)^2 = 12/121
        let oracle = (-2.5f64).exp() - (-1.0f64 / (2.0 * (12.0 / 121.0 + 0.1))).exp();
        assert!((v - oracle).abs() < 1e-15, "{v} vs {oracle}");
        assert!((v - 8.47e-4).abs() < 1e-6);
    }

    #[test]
    fn ikg_decreases_in_pulls() {
        let mut prev = f64::INFINITY;
        for t in [2, 5, 10, 50, 200, 1000] {
            let st = frozen(&[(1.0, 10, 1.0), (0.0, t, 1.0)]);
            let v = ikg_value(&st, 0, 1, &TargetEstimate::BestArm { best: 0 }).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn kg_tied_means_is_s_phi0() {
        let st = frozen(&[(0.5, 4, 1.0), (0.5, 4, 1.0)]);
        let s = (1.0f64 / 4.0 - 1.0 / 5.0).sqrt();
        let v = kg_value(&st, 0, 0).unwrap();
        assert!((v - s * 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn kg_and_ei_vanish_with_information() {
        let st = frozen(&[(1.0, 5, 1.0), (0.0, 100_000, 1.0)]);
        assert!(kg_value(&st, 0, 1).unwrap() < 1e-100);
        assert!(ei_value(&st, 0, 1).unwrap() < 1e-100);
    }

    #[test]
    fn ei_tied_is_sd_phi0() {
        let st = frozen(&[(0.5, 4, 2.0), (0.5, 9, 1.0)]);
        let v = ei_value(&st, 0, 0).unwrap();
        assert!((v - 1.0 * 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn equal_allocation_round_robin() {
        let mut st = frozen(&[(0.0, 2, 1.0), (1.0, 2, 1.0), (2.0, 2, 1.0)]);
        st.update(0, &[0.0]).unwrap();
        assert_eq!(st.round(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_arm(&Policy::Equal, &st, &Goal::BestArm, 0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn selection_requires_sampled_arms_and_matching_goal() {
        let st = frozen(&[(0.0, 1, 1.0), (1.0, 0, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            select_arm(&Policy::Ikg, &st, &Goal::BestArm, 0, &mut rng),
            Err(PolicyError::Model(ModelError::Unsampled(1)))
        );
        let st = frozen(&[(0.0, 1, 1.0), (1.0, 1, 1.0)]);
        assert!(matches!(
            select_arm(&Policy::Kg, &st, &Goal::EpsilonGood { epsilon: 0.1 }, 0, &mut rng),
            Err(PolicyError::GoalMismatch { .. })
        ));
        assert_eq!(
            select_arm(&Policy::Ttei { beta: 0.0 }, &st, &Goal::BestArm, 0, &mut rng),
            Err(PolicyError::Beta(0.0))
        );
    }

    #[test]
    fn ikg_picks_larger_value() {
        let st = frozen(&[(1.0, 10, 1.0), (0.0, 10, 1.0), (0.2, 40, 1.0)]);
        let target = TargetEstimate::BestArm { best: 0 };
        let vals: Vec<f64> = (0..3).map(|i| ikg_value(&st, 0, i, &target).unwrap()).collect();
        let expected = crate::model::argmax(&vals);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_arm(&Policy::Ikg, &st, &Goal::BestArm, 0, &mut rng).unwrap(), expected);
    }

    #[test]
    fn ttei_leader_fraction_is_beta() {
        let st = frozen(&[(1.0, 6, 1.0), (0.7, 5, 1.0), (0.2, 8, 1.0), (0.9, 3, 1.0)]);
        let (leader, challenger) = ttei_candidates(&st, 0);
        assert_ne!(leader, challenger);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let policy = Policy::Ttei { beta: 0.3 };
        let hits = (0..n)
            .filter(|_| select_arm(&policy, &st, &Goal::BestArm, 0, &mut rng).unwrap() == leader)
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "{frac}");
    }
}
