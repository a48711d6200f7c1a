mod common;

use common::{min_pairwise_rate, random_bai, random_feasibility, rel, rng};
use ikg::model::{ArmSpec, Goal, ProblemInstance};
use ikg::rates::{
    brute_force_allocation, empirical_rate, gamma_feasibility, gamma_kg, gamma_ttei, min_rate,
    solve_optimal_allocation, AllocationVector, SOLVER_TOLERANCE,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rounding the optimum down to the grid and handing the remainder to one
/// arm scales every coordinate by at least `1 - step / w_min`, and every rate
/// here is monotone and homogeneous of degree one in `w`.
fn grid_floor(opt: &AllocationVector, step: f64) -> f64 {
    let w_min = opt.w.iter().copied().fold(f64::INFINITY, f64::min);
    opt.gamma * (1.0 - step / w_min)
}

fn scalar_bai(means: &[f64], stds: &[f64]) -> ProblemInstance {
    let arms = means.iter().zip(stds).map(|(&m, &s)| ArmSpec::scalar(m, s)).collect();
    ProblemInstance::new(arms, Goal::BestArm, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kg_below_ttei_below_optimum(seed in any::<u64>(), k in 2usize..=6) {
        let inst = random_bai(&mut ChaCha8Rng::seed_from_u64(seed), k);
        let kg = gamma_kg(&inst).unwrap();
        let opt = solve_optimal_allocation(&inst).unwrap();
        let b = inst.best_arm();
        let at_kg_share = gamma_ttei(&inst, kg.w[b]).unwrap().gamma;
        let at_opt_share = gamma_ttei(&inst, opt.w[b]).unwrap().gamma;
        prop_assert!(kg.gamma <= at_kg_share * (1.0 + 1e-12));
        prop_assert!(at_kg_share <= opt.gamma * (1.0 + 1e-12));
        // the optimum is TTEI at its own best-arm share
        prop_assert!(rel(at_opt_share, opt.gamma) <= 1e-8);
    }
}

#[test]
fn two_arms_collapse_to_one_rate() {
    let mut r = rng(31);
    for _ in 0..50 {
        let inst = random_bai(&mut r, 2);
        let kg = gamma_kg(&inst).unwrap();
        let opt = solve_optimal_allocation(&inst).unwrap();
        assert!(rel(kg.gamma, opt.gamma) <= 1e-9);
        let best_ttei = (1..1000).map(|b| gamma_ttei(&inst, b as f64 / 1000.0).unwrap().gamma).fold(0.0, f64::max);
        assert!(best_ttei <= opt.gamma * (1.0 + 1e-12));
        assert!(rel(best_ttei, opt.gamma) <= 1e-4, "scan {best_ttei} vs {}", opt.gamma);
        // with two arms the optimal split is proportional to the noise stds
        let stds = inst.ranking_stds();
        assert!((opt.w[0] - stds[0] / (stds[0] + stds[1])).abs() <= 1e-8);
    }
}

#[test]
fn refining_the_grid_never_lowers_the_oracle() {
    let mut r = rng(37);
    for n in 0..10 {
        let inst = if n % 2 == 0 { random_bai(&mut r, 3) } else { random_feasibility(&mut r, 3, 2) };
        let coarse = brute_force_allocation(&inst, 0.01, 1).unwrap().gamma;
        let fine = brute_force_allocation(&inst, 0.002, 1).unwrap().gamma;
        assert!(fine >= coarse * (1.0 - 1e-12), "instance {n}: {fine} < {coarse}");
    }
}

#[test]
fn three_arm_solver_agrees_with_oracle_within_grid_resolution() {
    let inst = scalar_bai(&[1.0, 0.6, 0.2], &[1.0, 1.5, 0.7]);
    let opt = solve_optimal_allocation(&inst).unwrap();
    let step = 0.002;
    let bf = brute_force_allocation(&inst, step, 0).unwrap();
    assert!(bf.gamma <= opt.gamma * (1.0 + 1e-12));
    assert!(bf.gamma >= grid_floor(&opt, step), "{} vs floor {}", bf.gamma, grid_floor(&opt, step));
    assert!(bf.w.iter().zip(&opt.w).all(|(a, b)| (a - b).abs() <= 0.02));
    // the oracle's own value re-evaluated from its weights
    let means = inst.ranking_means();
    assert!(rel(min_pairwise_rate(&means, &inst.ranking_stds(), &bf.w, 0.0), bf.gamma) <= 1e-12);
}

#[test]
fn five_arm_feasibility_against_oracle() {
    let mut r = rng(41);
    for _ in 0..3 {
        let inst = random_feasibility(&mut r, 5, 2);
        let solved = gamma_feasibility(&inst).unwrap();
        let step = 0.002;
        let bf = brute_force_allocation(&inst, step, 0).unwrap();
        assert!(bf.gamma <= solved.gamma * (1.0 + 1e-12));
        assert!(bf.gamma >= grid_floor(&solved, step), "{} vs floor {}", bf.gamma, grid_floor(&solved, step));
    }
}

#[test]
fn empirical_rate_recovers_a_noisy_exponential() {
    let mut r = rng(43);
    for _ in 0..20 {
        let points: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let n = 100.0 * i as f64;
                (n, (-0.01 * n).exp() * r.random_range(0.9..1.1))
            })
            .collect();
        let slope = empirical_rate(&points).unwrap();
        assert!((slope - 0.01).abs() <= 0.002, "slope {slope}");
    }
}

#[test]
fn optimum_satisfies_first_order_conditions() {
    let mut r = rng(47);
    for _ in 0..30 {
        let k = r.random_range(3..=8);
        let inst = random_bai(&mut r, k);
        let opt = solve_optimal_allocation(&inst).unwrap();
        let res = &opt.residuals;
        assert!(res.simplex <= 1e-10);
        assert!(res.balance.unwrap() <= SOLVER_TOLERANCE);
        assert!(res.rate_equality <= SOLVER_TOLERANCE);
        assert!(rel(min_rate(&inst, &opt.w).unwrap(), opt.gamma) <= 1e-10);
        // no small move along the simplex improves the rate
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let mut w = opt.w.clone();
                let d = 1e-4 * w[j];
                w[i] += d;
                w[j] -= d;
                assert!(min_rate(&inst, &w).unwrap() <= opt.gamma * (1.0 + 1e-7));
            }
        }
    }
    for _ in 0..10 {
        let inst = random_feasibility(&mut r, 5, 2);
        let a = gamma_feasibility(&inst).unwrap();
        assert!(a.residuals.simplex <= 1e-10 && a.residuals.rate_equality <= SOLVER_TOLERANCE);
    }
}
