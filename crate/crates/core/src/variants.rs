//! iKG acquisition values for epsilon-good and feasible-arm identification.

use crate::model::{Goal, ModelError, PosteriorState, TargetEstimate};
use crate::normal::{log_exp_diff, log_sum_exp};
use crate::policy::{argmax_by, ikg_log_shifted, Policy, PolicyError, TopTwo};

pub use crate::model::FeasibilityContext;

/// iKG for epsilon-good identification: the best-arm formula with every gap
/// `mu_i - mu_leader` replaced by `mu_i - mu_leader + epsilon`.
pub fn ikg_eps_value(
    state: &PosteriorState,
    measure: usize,
    arm: usize,
    epsilon: f64,
    target: &TargetEstimate,
) -> Result<f64, PolicyError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ModelError::Epsilon(epsilon).into());
    }
    if arm >= state.num_arms() {
        return Err(ModelError::ArmIndex { arm, k: state.num_arms() }.into());
    }
    state.check_all_sampled()?;
    let leader = target.leader().ok_or(PolicyError::TargetKind)?;
    Ok(ikg_log_shifted(state, measure, arm, leader, epsilon).exp())
}

/// `(current, lookahead)` exponents `(gamma - mu)^2 / (2 v)` for one cell.
#[inline]
fn threshold_exponents(state: &PosteriorState, arm: usize, measure: usize, threshold: f64) -> (f64, f64) {
    let gap = threshold - state.mean(arm, measure);
    let g2 = 0.5 * gap * gap;
    let (next, shift) = state.lookahead_unchecked(arm, measure);
    (g2 / state.var(arm, measure), g2 / (next + shift))
}

pub(crate) fn ikg_f_log(state: &PosteriorState, arm: usize, ctx: &FeasibilityContext) -> f64 {
    if ctx.is_feasible(arm) {
        log_sum_exp((0..state.num_measures()).map(|j| {
            let (a, b) = threshold_exponents(state, arm, j, ctx.thresholds[j]);
            log_exp_diff(a, b)
        }))
    } else {
        // summed exponents, one exponentiation
        let (a, b) = ctx.violated[arm].iter().fold((0.0, 0.0), |(sa, sb), &j| {
            let (a, b) = threshold_exponents(state, arm, j, ctx.thresholds[j]);
            (sa + a, sb + b)
        });
        log_exp_diff(a, b)
    }
}

/// iKG for feasible-arm identification.
///
/// `ctx` must be the partition induced by the current posterior means.
pub fn ikg_f_value(state: &PosteriorState, arm: usize, ctx: &FeasibilityContext) -> Result<f64, PolicyError> {
    if arm >= state.num_arms() {
        return Err(ModelError::ArmIndex { arm, k: state.num_arms() }.into());
    }
    state.check_all_sampled()?;
    let means: Vec<f64> = (0..state.num_arms()).flat_map(|i| state.means_row(i).to_vec()).collect();
    if ctx.thresholds.len() != state.num_measures()
        || *ctx != FeasibilityContext::from_means(&means, state.num_measures(), &ctx.thresholds)
    {
        return Err(PolicyError::InconsistentContext);
    }
    Ok(ikg_f_log(state, arm, ctx).exp())
}

/// Next arm for `ikg_eps` / `ikg_f`. The leader or feasibility partition is
/// recomputed from the posterior on every call.
pub fn select_arm_variant(
    policy: &Policy,
    state: &PosteriorState,
    goal: &Goal,
    measure: usize,
) -> Result<usize, PolicyError> {
    if !matches!(policy, Policy::IkgEps | Policy::IkgF) {
        return Err(PolicyError::GoalMismatch { policy: policy.to_string(), goal: goal.short_name() });
    }
    policy.check_goal(goal)?;
    state.check_all_sampled()?;
    Ok(select_variant_unchecked(policy, state, goal, measure))
}

pub(crate) fn select_variant_unchecked(policy: &Policy, state: &PosteriorState, goal: &Goal, measure: usize) -> usize {
    let k = state.num_arms();
    match (policy, goal) {
        (Policy::IkgEps, Goal::EpsilonGood { epsilon }) => {
            let leader = TopTwo::of(state, measure).first;
            argmax_by(k, |i| ikg_log_shifted(state, measure, i, leader, *epsilon))
        }
        (Policy::IkgF, Goal::Feasibility { thresholds }) => {
            let m = state.num_measures();
            let means: Vec<f64> = (0..k).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| state.mean(i, j)).collect();
            let ctx = FeasibilityContext::from_means(&means, m, thresholds);
            argmax_by(k, |i| ikg_f_log(state, i, &ctx))
        }
        _ => unreachable!("goal checked by caller"),
    }
}

/// Lower bound on the probability of correct selection obtained from the
/// union bound, with exact Gaussian tail probabilities for every term.
///
/// Posterior draws `theta_ij ~ N(mu_ij, v_ij)` are taken as independent.
/// For epsilon-good goals the comparison is against the estimated leader.
pub fn union_bound_correct_selection(state: &PosteriorState, goal: &Goal, measure: usize) -> Result<f64, PolicyError> {
    use crate::normal::{cdf, sf};
    let est = state.target_estimate(goal, measure)?;
    let k = state.num_arms();
    let miss: f64 = match (&est, goal) {
        (TargetEstimate::BestArm { best }, _) => (0..k)
            .filter(|i| i != best)
            .map(|i| {
                let sd = (state.var(i, measure) + state.var(*best, measure)).sqrt();
                sf((state.mean(*best, measure) - state.mean(i, measure)) / sd)
            })
            .sum(),
        (TargetEstimate::EpsilonGood { leader, good }, Goal::EpsilonGood { epsilon }) => (0..k)
            .filter(|i| i != leader)
            .map(|i| {
                let sd = (state.var(i, measure) + state.var(*leader, measure)).sqrt();
                // theta_i - theta_leader + eps, positive for good arms
                let z = (state.mean(i, measure) - state.mean(*leader, measure) + epsilon) / sd;
                if good.contains(&i) {
                    sf(z)
                } else {
                    cdf(z)
                }
            })
            .sum(),
        (TargetEstimate::Feasibility(ctx), _) => (0..k)
            .map(|i| {
                let tail = |j: usize| {
                    let z = (ctx.thresholds[j] - state.mean(i, j)) / state.var(i, j).sqrt();
                    (sf(z), cdf(z))
                };
                if ctx.is_feasible(i) {
                    (0..state.num_measures()).map(|j| tail(j).0).sum::<f64>()
                } else {
                    ctx.violated[i].iter().map(|&j| tail(j).1).product::<f64>()
                }
            })
            .sum(),
        _ => return Err(PolicyError::TargetKind),
    };
    Ok(1.0 - miss)
}
