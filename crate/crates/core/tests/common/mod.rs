//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use ikg::model::{ArmSpec, Goal, PosteriorState, ProblemInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Posterior whose arm `i` has mean `means[i][j]` after `pulls[i]` samples
/// (every sample equal to the mean), noise std `stds[i][j]`.
pub fn frozen(means: &[Vec<f64>], pulls: &[u64], stds: &[Vec<f64>]) -> PosteriorState {
    let mut st = PosteriorState::from_noise_stds(stds.iter().map(|s| s.as_slice()));
    for (i, (mu, &t)) in means.iter().zip(pulls).enumerate() {
        for _ in 0..t {
            st.update(i, mu).unwrap();
        }
    }
    st
}

pub fn frozen_scalar(means: &[f64], pulls: &[u64], stds: &[f64]) -> PosteriorState {
    let m: Vec<Vec<f64>> = means.iter().map(|&x| vec![x]).collect();
    let s: Vec<Vec<f64>> = stds.iter().map(|&x| vec![x]).collect();
    frozen(&m, pulls, &s)
}

/// Lookahead variance in count form, `(T + 2) sigma^2 / (T + 1)^2`.
pub fn count_form(t: u64, sigma2: f64) -> f64 {
    (t as f64 + 2.0) * sigma2 / ((t as f64 + 1.0) * (t as f64 + 1.0))
}

/// Mean and standard error of `f` over `n` standard-normal draws.
pub fn mc_mean<R: Rng>(rng: &mut R, n: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let x = f(z);
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Random best-arm instance with `k` arms, means in (0, 1) and stds in
/// (0.5, 2); redrawn until the best mean is unique.
pub fn random_bai<R: Rng>(rng: &mut R, k: usize) -> ProblemInstance {
    loop {
        let arms: Vec<ArmSpec> =
            (0..k).map(|_| ArmSpec::scalar(rng.random_range(0.0..1.0), rng.random_range(0.5..2.0))).collect();
        if let Ok(inst) = ProblemInstance::new(arms, Goal::BestArm, 0) {
            return inst;
        }
    }
}

/// Random feasibility instance with `k` arms and `m` measures, thresholds 0.
pub fn random_feasibility<R: Rng>(rng: &mut R, k: usize, m: usize) -> ProblemInstance {
    let arms = (0..k)
        .map(|_| {
            ArmSpec::new(
                (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..m).map(|_| rng.random_range(0.5..2.0)).collect(),
            )
        })
        .collect();
    ProblemInstance::new(arms, Goal::Feasibility { thresholds: vec![0.0; m] }, 0).unwrap()
}

/// Direct `min_i gap_i^2 / (2 (sigma_i^2 / w_i + sigma_b^2 / w_b))`.
pub fn min_pairwise_rate(means: &[f64], stds: &[f64], w: &[f64], shift: f64) -> f64 {
    let b = (0..means.len()).fold(0, |b, i| if means[i] > means[b] { i } else { b });
    (0..means.len())
        .filter(|&i| i != b)
        .map(|i| {
            let gap = means[i] - means[b] + shift;
            gap * gap / (2.0 * (stds[i] * stds[i] / w[i] + stds[b] * stds[b] / w[b]))
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
