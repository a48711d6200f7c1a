mod common;

use common::{count_form, rel, rng};
use ikg::model::{argmax, PosteriorState};
use ikg::{preset, GoalKind};
use proptest::prelude::*;
use rand::Rng;

fn one_arm(sd: f64) -> PosteriorState {
    PosteriorState::from_noise_stds([[sd].as_slice(), [1.0].as_slice()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sequential_updates_match_batch_mean(
        xs in prop::collection::vec(-50.0f64..50.0, 1..60),
        sd in 0.1f64..5.0,
    ) {
        let mut st = one_arm(sd);
        for &x in &xs {
            st.update(0, &[x]).unwrap();
        }
        let t = xs.len() as f64;
        let batch = xs.iter().sum::<f64>() / t;
        prop_assert!((st.mean(0, 0) - batch).abs() <= 1e-9 * (1.0 + batch.abs()));
        prop_assert!(rel(st.var(0, 0), sd * sd / t) <= 1e-12);
        prop_assert_eq!(st.pulls()[0], xs.len() as u64);
    }

    #[test]
    fn update_leaves_other_rows_alone(
        xs in prop::collection::vec(-10.0f64..10.0, 1..20),
        y in -10.0f64..10.0,
    ) {
        let mut st = PosteriorState::from_noise_stds([[1.0, 2.0].as_slice(), [0.5, 0.5].as_slice()]);
        st.update(1, &[y, -y]).unwrap();
        let (mean1, var1) = (st.means_row(1).to_vec(), st.var_row(1).to_vec());
        for &x in &xs {
            st.update(0, &[x, x]).unwrap();
        }
        prop_assert_eq!(st.means_row(1), mean1.as_slice());
        prop_assert_eq!(st.var_row(1), var1.as_slice());
        prop_assert_eq!(st.pulls()[1], 1);
    }

    #[test]
    fn argmax_ignores_a_common_shift(
        xs in prop::collection::vec(-100.0f64..100.0, 1..30),
        c in -1e3f64..1e3,
    ) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let (a, b) = (argmax(&xs), argmax(&shifted));
        // shifting can merge values that differed by less than an ulp of c
        prop_assert!(a == b || (xs[a] - xs[b]).abs() <= 1e-9 * (1.0 + c.abs()));
    }
}

#[test]
fn lookahead_count_form_over_random_states() {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let sd: f64 = r.random_range(0.05..10.0);
        let t: u64 = r.random_range(1..5000);
        let mut st = one_arm(sd);
        for _ in 0..t {
            st.update(0, &[r.random_range(-1.0..1.0)]).unwrap();
        }
        let (next, shift) = st.lookahead_variance(0, 0).unwrap();
        worst = worst.max(rel(next + shift, count_form(t, sd * sd)));
        assert!(rel(next, sd * sd / (t as f64 + 1.0)) <= 1e-12);
    }
    assert!(worst <= 1e-12, "max relative error {worst:e}");
}

#[test]
fn lookahead_requires_a_sample() {
    let st = one_arm(1.0);
    assert!(st.lookahead_variance(0, 0).is_err());
    assert!(st.lookahead_variance(5, 0).is_err());
}

#[test]
fn draw_sample_has_the_configured_mean() {
    let inst = preset("example1", GoalKind::Bai).unwrap();
    let mut r = rng(11);
    let n = 1_000_000;
    let mean = (0..n).map(|_| inst.draw_sample(2, &mut r).unwrap()[0]).sum::<f64>() / n as f64;
    assert!((mean - 3.0594).abs() <= 0.005, "sample mean {mean}");
}
