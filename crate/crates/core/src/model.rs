//! Gaussian arms, identification goals and the conjugate posterior.
//!
//! Every arm returns an `m`-dimensional sample whose components are
//! independent Gaussians with known standard deviations. The posterior starts
//! from the non-informative prior (`mu_0 = 0`, `sigma_0 = inf`), so after `T`
//! pulls the posterior variance of measure `j` is exactly `sigma_j^2 / T` and
//! the posterior mean is the sample mean.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("need at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("arm {arm}: means and noise_stds must have equal nonzero length (got {means} and {stds})")]
    ArmShape { arm: usize, means: usize, stds: usize },
    #[error("arm {arm} has {got} measures, expected {expected}")]
    MeasureCount { arm: usize, got: usize, expected: usize },
    #[error("arm {arm} measure {measure}: noise std must be positive and finite, got {value}")]
    NoiseStd { arm: usize, measure: usize, value: f64 },
    #[error("arm {arm} measure {measure}: mean is not finite")]
    NonFiniteMean { arm: usize, measure: usize },
    #[error("ranking measure {0} out of range")]
    RankingMeasure(usize),
    #[error("best arm is not unique on the ranking measure")]
    TiedBest,
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("arm {0} has a mean exactly at the epsilon-good boundary")]
    OnEpsilonBoundary(usize),
    #[error("expected {expected} thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("arm {arm} measure {measure}: mean lies exactly on the threshold")]
    OnThreshold { arm: usize, measure: usize },
    #[error("arm index {arm} out of range for {k} arms")]
    ArmIndex { arm: usize, k: usize },
    #[error("sample has {got} components, expected {expected}")]
    SampleLength { expected: usize, got: usize },
    #[error("arm {0} has not been sampled yet")]
    Unsampled(usize),
}

/// Ground-truth means and noise levels of one arm, one entry per measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub means: Vec<f64>,
    pub noise_stds: Vec<f64>,
}

impl ArmSpec {
    pub fn new(means: Vec<f64>, noise_stds: Vec<f64>) -> Self {
        Self { means, noise_stds }
    }

    /// Single-measure arm.
    pub fn scalar(mean: f64, noise_std: f64) -> Self {
        Self::new(vec![mean], vec![noise_std])
    }

    pub fn measures(&self) -> usize {
        self.means.len()
    }
}

/// What the agent has to identify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Goal {
    BestArm,
    EpsilonGood { epsilon: f64 },
    /// Arm `i` is feasible when `mu_ij <= thresholds[j]` for every measure.
    Feasibility { thresholds: Vec<f64> },
}

impl Goal {
    pub fn short_name(&self) -> &'static str {
        match self {
            Goal::BestArm => "bai",
            Goal::EpsilonGood { .. } => "eps_good",
            Goal::Feasibility { .. } => "feasible",
        }
    }
}

/// Direction of a feasibility constraint before canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSense {
    /// `mu <= gamma`
    Le,
    /// `mu >= gamma`, stored as `-mu <= -gamma`
    Ge,
}

/// A validated identification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    arms: Vec<ArmSpec>,
    goal: Goal,
    ranking_measure: usize,
}

impl ProblemInstance {
    pub fn new(arms: Vec<ArmSpec>, goal: Goal, ranking_measure: usize) -> Result<Self, ModelError> {
        let k = arms.len();
        if k < 2 {
            return Err(ModelError::TooFewArms(k));
        }
        let m = arms[0].means.len();
        for (i, arm) in arms.iter().enumerate() {
            if arm.means.is_empty() || arm.means.len() != arm.noise_stds.len() {
                return Err(ModelError::ArmShape {
                    arm: i,
                    means: arm.means.len(),
                    stds: arm.noise_stds.len(),
                });
            }
            if arm.means.len() != m {
                return Err(ModelError::MeasureCount { arm: i, got: arm.means.len(), expected: m });
            }
            for (j, (&mu, &sd)) in arm.means.iter().zip(&arm.noise_stds).enumerate() {
                if !mu.is_finite() {
                    return Err(ModelError::NonFiniteMean { arm: i, measure: j });
                }
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(ModelError::NoiseStd { arm: i, measure: j, value: sd });
                }
            }
        }
        if ranking_measure >= m {
            return Err(ModelError::RankingMeasure(ranking_measure));
        }
        let ranking: Vec<f64> = arms.iter().map(|a| a.means[ranking_measure]).collect();
        match &goal {
            Goal::BestArm => {
                let best = argmax(&ranking);
                if ranking.iter().enumerate().any(|(i, &v)| i != best && v == ranking[best]) {
                    return Err(ModelError::TiedBest);
                }
            }
            Goal::EpsilonGood { epsilon } => {
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(ModelError::Epsilon(*epsilon));
                }
                let boundary = ranking[argmax(&ranking)] - epsilon;
                if let Some(i) = ranking.iter().position(|&v| v == boundary) {
                    return Err(ModelError::OnEpsilonBoundary(i));
                }
            }
            Goal::Feasibility { thresholds } => {
                if thresholds.len() != m {
                    return Err(ModelError::ThresholdCount { expected: m, got: thresholds.len() });
                }
                for (i, arm) in arms.iter().enumerate() {
                    for (j, (&mu, &g)) in arm.means.iter().zip(thresholds).enumerate() {
                        if mu == g {
                            return Err(ModelError::OnThreshold { arm: i, measure: j });
                        }
                    }
                }
            }
        }
        Ok(Self { arms, goal, ranking_measure })
    }

    /// Feasibility instance with mixed constraint directions. Measures with a
    /// `Ge` sense are negated together with their threshold, so the stored
    /// problem only contains `mu_ij <= gamma_j` constraints.
    pub fn feasibility_with_senses(
        mut arms: Vec<ArmSpec>,
        mut thresholds: Vec<f64>,
        senses: &[ConstraintSense],
    ) -> Result<Self, ModelError> {
        if senses.len() != thresholds.len() {
            return Err(ModelError::ThresholdCount { expected: thresholds.len(), got: senses.len() });
        }
        for (j, sense) in senses.iter().enumerate() {
            if *sense == ConstraintSense::Ge {
                thresholds[j] = -thresholds[j];
                for arm in arms.iter_mut() {
                    if let Some(mu) = arm.means.get_mut(j) {
                        *mu = -*mu;
                    }
                }
            }
        }
        Self::new(arms, Goal::Feasibility { thresholds }, 0)
    }

    pub fn arms(&self) -> &[ArmSpec] {
        &self.arms
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn ranking_measure(&self) -> usize {
        self.ranking_measure
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn num_measures(&self) -> usize {
        self.arms[0].means.len()
    }

    /// Same arms, different goal (revalidated).
    pub fn with_goal(&self, goal: Goal) -> Result<Self, ModelError> {
        Self::new(self.arms.clone(), goal, self.ranking_measure)
    }

    /// Means on the ranking measure.
    pub fn ranking_means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.means[self.ranking_measure]).collect()
    }

    /// Noise std on the ranking measure.
    pub fn ranking_stds(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.noise_stds[self.ranking_measure]).collect()
    }

    /// The true arm with the largest mean on the ranking measure.
    pub fn best_arm(&self) -> usize {
        argmax(&self.ranking_means())
    }

    /// Target computed from the ground-truth means.
    pub fn true_target(&self) -> TargetEstimate {
        let m = self.num_measures();
        let means: Vec<f64> = self.arms.iter().flat_map(|a| a.means.iter().copied()).collect();
        estimate_from_means(&means, m, self.ranking_measure, &self.goal)
    }

    /// One noisy observation of every measure of `arm`.
    pub fn draw_sample<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.num_measures()];
        self.draw_sample_into(arm, rng, &mut out)?;
        Ok(out)
    }

    pub fn draw_sample_into<R: Rng + ?Sized>(
        &self,
        arm: usize,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        let spec = self.arms.get(arm).ok_or(ModelError::ArmIndex { arm, k: self.arms.len() })?;
        if out.len() != spec.means.len() {
            return Err(ModelError::SampleLength { expected: spec.means.len(), got: out.len() });
        }
        for ((o, &mu), &sd) in out.iter_mut().zip(&spec.means).zip(&spec.noise_stds) {
            let z: f64 = rng.sample(StandardNormal);
            *o = mu + sd * z;
        }
        Ok(())
    }
}

/// Lowest index attaining the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Bayesian posterior over every arm and measure.
///
/// Matrices are stored row-major with one row per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    k: usize,
    m: usize,
    noise_var: Vec<f64>,
    post_mean: Vec<f64>,
    post_var: Vec<f64>,
    pulls: Vec<u64>,
    round: u64,
}

impl PosteriorState {
    /// Non-informative prior for every arm of `instance`.
    pub fn new(instance: &ProblemInstance) -> Self {
        Self::from_noise_stds(instance.arms().iter().map(|a| a.noise_stds.as_slice()))
    }

    /// Non-informative prior for arms with the given per-measure noise stds.
    pub fn from_noise_stds<'a>(stds: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let rows: Vec<&[f64]> = stds.into_iter().collect();
        let k = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged noise matrix");
        let noise_var = rows.iter().flat_map(|r| r.iter().map(|s| s * s)).collect();
        Self {
            k,
            m,
            noise_var,
            post_mean: vec![0.0; k * m],
            post_var: vec![f64::INFINITY; k * m],
            pulls: vec![0; k],
            round: 0,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.k
    }

    pub fn num_measures(&self) -> usize {
        self.m
    }

    pub fn mean(&self, arm: usize, measure: usize) -> f64 {
        self.post_mean[arm * self.m + measure]
    }

    pub fn var(&self, arm: usize, measure: usize) -> f64 {
        self.post_var[arm * self.m + measure]
    }

    /// Known sampling variance `sigma_ij^2`.
    pub fn noise_var(&self, arm: usize, measure: usize) -> f64 {
        self.noise_var[arm * self.m + measure]
    }

    pub fn means_row(&self, arm: usize) -> &[f64] {
        &self.post_mean[arm * self.m..(arm + 1) * self.m]
    }

    pub fn var_row(&self, arm: usize) -> &[f64] {
        &self.post_var[arm * self.m..(arm + 1) * self.m]
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Posterior means of one measure across arms.
    pub fn measure_means(&self, measure: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.mean(i, measure)).collect()
    }

    pub fn check_all_sampled(&self) -> Result<(), ModelError> {
        match self.pulls.iter().position(|&t| t == 0) {
            Some(i) => Err(ModelError::Unsampled(i)),
            None => Ok(()),
        }
    }

    /// Conjugate update of `arm` with one observation.
    ///
    /// The mean follows the precision-weighted recursion; the variance is set
    /// to its closed form `sigma^2 / T`, which is what the recursion evaluates
    /// to under the non-informative prior.
    pub fn update(&mut self, arm: usize, sample: &[f64]) -> Result<(), ModelError> {
        if arm >= self.k {
            return Err(ModelError::ArmIndex { arm, k: self.k });
        }
        if sample.len() != self.m {
            return Err(ModelError::SampleLength { expected: self.m, got: sample.len() });
        }
        let t = self.pulls[arm] + 1;
        let row = arm * self.m;
        for (j, &x) in sample.iter().enumerate() {
            let s2 = self.noise_var[row + j];
            let prior_prec = 1.0 / self.post_var[row + j];
            let sample_prec = 1.0 / s2;
            let mean = (prior_prec * self.post_mean[row + j] + sample_prec * x) / (prior_prec + sample_prec);
            self.post_mean[row + j] = if t == 1 { x } else { mean };
            self.post_var[row + j] = s2 / t as f64;
        }
        self.pulls[arm] = t;
        self.round += 1;
        Ok(())
    }

    /// One-step lookahead quantities for `(arm, measure)`.
    ///
    /// Returns `(post_var_next, mean_shift_var)` where `post_var_next` is the
    /// posterior variance after one more sample and `mean_shift_var` is
    /// `sigma^2 * (post_var_next / sigma^2)^2`.
    pub fn lookahead_variance(&self, arm: usize, measure: usize) -> Result<(f64, f64), ModelError> {
        if arm >= self.k {
            return Err(ModelError::ArmIndex { arm, k: self.k });
        }
        if self.pulls[arm] == 0 {
            return Err(ModelError::Unsampled(arm));
        }
        Ok(self.lookahead_unchecked(arm, measure))
    }

    #[inline]
    pub(crate) fn lookahead_unchecked(&self, arm: usize, measure: usize) -> (f64, f64) {
        let s2 = self.noise_var(arm, measure);
        let next = 1.0 / (1.0 / self.var(arm, measure) + 1.0 / s2);
        let ratio = next / s2;
        (next, s2 * ratio * ratio)
    }

    /// Current estimate of the target set for `goal`.
    pub fn target_estimate(&self, goal: &Goal, ranking_measure: usize) -> Result<TargetEstimate, ModelError> {
        self.check_all_sampled()?;
        Ok(estimate_from_means(&self.post_mean, self.m, ranking_measure, goal))
    }
}

/// Which arms violate / satisfy each threshold, derived from a means matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityContext {
    pub thresholds: Vec<f64>,
    /// Estimated feasible arms (`S^1`), ascending.
    pub feasible: Vec<usize>,
    /// Estimated infeasible arms (`S^2`), ascending.
    pub infeasible: Vec<usize>,
    /// Per arm, measures with `mu_ij <= gamma_j`.
    pub satisfied: Vec<Vec<usize>>,
    /// Per arm, measures with `mu_ij > gamma_j`.
    pub violated: Vec<Vec<usize>>,
}

impl FeasibilityContext {
    pub fn from_means(means: &[f64], m: usize, thresholds: &[f64]) -> Self {
        let k = means.len() / m;
        let mut ctx = FeasibilityContext {
            thresholds: thresholds.to_vec(),
            feasible: Vec::new(),
            infeasible: Vec::new(),
            satisfied: Vec::with_capacity(k),
            violated: Vec::with_capacity(k),
        };
        for i in 0..k {
            let (sat, vio): (Vec<usize>, Vec<usize>) =
                (0..m).partition(|&j| means[i * m + j] <= thresholds[j]);
            if vio.is_empty() {
                ctx.feasible.push(i);
            } else {
                ctx.infeasible.push(i);
            }
            ctx.satisfied.push(sat);
            ctx.violated.push(vio);
        }
        ctx
    }

    pub fn is_feasible(&self, arm: usize) -> bool {
        self.violated[arm].is_empty()
    }

    /// Partition and per-arm measure sets are mutually consistent.
    pub fn is_consistent(&self) -> bool {
        let k = self.satisfied.len();
        let mut seen = vec![0u8; k];
        for &i in self.feasible.iter().chain(&self.infeasible) {
            if i >= k {
                return false;
            }
            seen[i] += 1;
        }
        seen.iter().all(|&c| c == 1)
            && self.feasible.iter().all(|&i| self.violated[i].is_empty())
            && self.infeasible.iter().all(|&i| !self.violated[i].is_empty())
    }
}

/// Estimated (or true) target of an identification goal.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetEstimate {
    BestArm { best: usize },
    EpsilonGood { leader: usize, good: Vec<usize> },
    Feasibility(FeasibilityContext),
}

impl TargetEstimate {
    /// Whether two estimates select the same arms (the leader of an
    /// epsilon-good estimate is not part of the selection).
    pub fn same_selection(&self, other: &TargetEstimate) -> bool {
        match (self, other) {
            (TargetEstimate::BestArm { best: a }, TargetEstimate::BestArm { best: b }) => a == b,
            (TargetEstimate::EpsilonGood { good: a, .. }, TargetEstimate::EpsilonGood { good: b, .. }) => a == b,
            (TargetEstimate::Feasibility(a), TargetEstimate::Feasibility(b)) => a.feasible == b.feasible,
            _ => false,
        }
    }

    /// The leading arm for best-arm and epsilon-good estimates.
    pub fn leader(&self) -> Option<usize> {
        match self {
            TargetEstimate::BestArm { best } => Some(*best),
            TargetEstimate::EpsilonGood { leader, .. } => Some(*leader),
            TargetEstimate::Feasibility(_) => None,
        }
    }

    /// Selected arms, ascending.
    pub fn selected(&self) -> Vec<usize> {
        match self {
            TargetEstimate::BestArm { best } => vec![*best],
            TargetEstimate::EpsilonGood { good, .. } => good.clone(),
            TargetEstimate::Feasibility(ctx) => ctx.feasible.clone(),
        }
    }
}

pub(crate) fn estimate_from_means(means: &[f64], m: usize, ranking: usize, goal: &Goal) -> TargetEstimate {
    let k = means.len() / m;
    let ranked = || (0..k).map(|i| means[i * m + ranking]);
    match goal {
        Goal::BestArm => TargetEstimate::BestArm { best: argmax(&ranked().collect::<Vec<_>>()) },
        Goal::EpsilonGood { epsilon } => {
            let r: Vec<f64> = ranked().collect();
            let leader = argmax(&r);
            let cut = r[leader] - epsilon;
            let good = (0..k).filter(|&i| r[i] > cut).collect();
            TargetEstimate::EpsilonGood { leader, good }
        }
        Goal::Feasibility { thresholds } => {
            TargetEstimate::Feasibility(FeasibilityContext::from_means(means, m, thresholds))
        }
    }
}
