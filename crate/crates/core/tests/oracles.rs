//! Frozen value oracles for every loss in the family.
//!
//! Each constant below was computed independently (closed form where one
//! exists, otherwise high-precision arithmetic on the defining formula) and
//! is pinned to more digits than an f64 carries, so these tests fail on any
//! drift in the loss definitions, not just gross regressions.

mod common;

use common::{est_sample, one_hot_world, rewards_model, world_with};
use preflab_core::loss::{hps_exact_loss_into, hps_value_from_rewards};
use preflab_core::{
    bt_loss, hard_sampling_distribution, hps_exact_loss, hps_sampled_loss, lipo_loss, pl_loss, weighted_hps_loss,
    Evaluator, HpsDenominator, PrefError, RewardModel,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

/// softmax(1·(0, -1)) to full f64 precision.
const Q_HARD: [f64; 2] = [0.7310585786300049, 0.2689414213699951];
/// ln 6: the three-item listwise loss at equal rewards.
const LN_SIX: f64 = 1.791759469228055;
/// Three-item listwise loss at rewards (1, 0, -1).
const PL_STAIRCASE: f64 = 0.72086765196260316;
/// ln(4/3): pairwise loss at reward margin ln 3.
const BT_AT_LN3: f64 = 0.28768207245178085;
/// Hard-preference loss at r = est = (1, 0, -1), gamma = 1, scaled form.
const HPS_STAIRCASE: f64 = 0.47665481698184653;
/// Same instance under the unscaled denominator.
const HPS_STAIRCASE_PLAIN: f64 = 0.2664625356892687;
/// |2^1 - 2^0| * |1/ln2 - 1/ln3| * ln 2: the two-item lambda loss at tied
/// model scores.
const LIPO_PAIR: f64 = 0.36907024642854258;

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[test]
fn hard_weights_are_softmax_of_estimates() {
    let sample = est_sample(&[5.0, 0.0, -1.0]);
    let q = hard_sampling_distribution(&sample, 1.0).unwrap();
    assert!((q.weights[0] - Q_HARD[0]).abs() < TOL);
    assert!((q.weights[1] - Q_HARD[1]).abs() < TOL);
    assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < TOL);

    let flat = hard_sampling_distribution(&sample, 0.0).unwrap();
    assert_eq!(flat.weights, vec![0.5, 0.5]);
}

#[test]
fn pl_value_is_log_factorial_at_equal_rewards() {
    let world = one_hot_world(3);
    let sample = est_sample(&[0.0; 3]);
    let loss = pl_loss(&sample, &rewards_model(&[0.0; 3]), &world).unwrap();
    assert!((loss.value - LN_SIX).abs() < TOL);
}

#[test]
fn pl_three_item_staircase_value() {
    let world = one_hot_world(3);
    let sample = est_sample(&[1.0, 0.0, -1.0]);
    let loss = pl_loss(&sample, &rewards_model(&[1.0, 0.0, -1.0]), &world).unwrap();
    assert!((loss.value - PL_STAIRCASE).abs() < TOL);
}

#[test]
fn pl_and_bt_coincide_on_pairs() {
    let world = one_hot_world(2);
    let sample = est_sample(&[0.4, -0.9]);
    let model = rewards_model(&[0.4, -0.9]);
    let pl = pl_loss(&sample, &model, &world).unwrap();
    let bt = bt_loss(&sample, &model, &world).unwrap();
    let softplus_gap = (-1.3f64).exp().ln_1p();
    assert!((pl.value - bt.value).abs() < TOL);
    assert!((pl.value - softplus_gap).abs() < TOL);
}

#[test]
fn bt_zero_margin_is_ln_two() {
    let world = one_hot_world(2);
    let sample = est_sample(&[0.8, 0.8]);
    let loss = bt_loss(&sample, &rewards_model(&[0.8, 0.8]), &world).unwrap();
    assert!((loss.value - 2f64.ln()).abs() < TOL);
}

#[test]
fn bt_margin_ln_three_value() {
    let world = one_hot_world(2);
    let r = [3f64.ln(), 0.0];
    let loss = bt_loss(&est_sample(&r), &rewards_model(&r), &world).unwrap();
    assert!((loss.value - BT_AT_LN3).abs() < TOL);
}

#[test]
fn bt_sees_only_the_extreme_pair() {
    let world = one_hot_world(5);
    let base = [2.0, 1.0, 0.5, -0.5, -1.0];
    let perturbed = [2.0, 7.0, -3.0, 0.25, -1.0];
    let a = bt_loss(&est_sample(&base), &rewards_model(&base), &world).unwrap();
    let b = bt_loss(&est_sample(&perturbed), &rewards_model(&perturbed), &world).unwrap();
    assert_eq!(a.value, b.value);
}

#[test]
fn hps_three_item_pinned_value() {
    let world = one_hot_world(3);
    let r = [1.0, 0.0, -1.0];
    let loss = hps_exact_loss(&est_sample(&r), &rewards_model(&r), &world, 1.0).unwrap();
    assert!((loss.value - HPS_STAIRCASE).abs() < TOL);
    assert!((hps_value_from_rewards(&r, &r[1..], 1.0, HpsDenominator::ScaledByN) - HPS_STAIRCASE).abs() < TOL);
}

#[test]
fn hps_plain_denominator_flag() {
    let world = one_hot_world(3);
    let r = [1.0, 0.0, -1.0];
    let model = rewards_model(&r);
    let mut ev = Evaluator::new(&model, &world);
    let value = hps_exact_loss_into(&est_sample(&r), &mut ev, 1.0, HpsDenominator::Plain, None).unwrap();
    assert!((value - HPS_STAIRCASE_PLAIN).abs() < TOL);
    assert!((hps_value_from_rewards(&r, &r[1..], 1.0, HpsDenominator::Plain) - HPS_STAIRCASE_PLAIN).abs() < TOL);
}

#[test]
fn hps_equal_rewards_is_ln_n() {
    let world = one_hot_world(4);
    let loss = hps_exact_loss(&est_sample(&[0.0; 4]), &rewards_model(&[0.0; 4]), &world, 7.0).unwrap();
    assert!((loss.value - 4f64.ln()).abs() < TOL);
}

#[test]
fn hps_at_gamma_zero_is_softmax_loss() {
    let world = one_hot_world(4);
    let r = [0.3, -1.2, 2.0, 0.5];
    // Estimates deliberately disagree with r: at gamma = 0 they must not
    // matter.
    let sample = est_sample(&[9.0, 8.0, 7.0, 6.0]);
    let loss = hps_exact_loss(&sample, &rewards_model(&r), &world, 0.0).unwrap();
    assert!((loss.value - (lse(&r) - r[0])).abs() < TOL);
}

#[test]
fn hps_pair_reduces_to_bt() {
    let world = one_hot_world(2);
    let r = [0.7, -0.2];
    let model = rewards_model(&r);
    let sample = est_sample(&r);
    let hps = hps_exact_loss(&sample, &model, &world, 3.7).unwrap();
    let bt = bt_loss(&sample, &model, &world).unwrap();
    assert!((hps.value - bt.value).abs() < TOL);
    for (a, b) in hps.gradient.iter().zip(&bt.gradient) {
        assert!((a - b).abs() < TOL);
    }
}

#[test]
fn sampled_hps_on_pairs_matches_exact() {
    let world = one_hot_world(2);
    let r = [0.7, -0.2];
    let model = rewards_model(&r);
    let sample = est_sample(&r);
    let exact = hps_exact_loss(&sample, &model, &world, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let drawn = hps_sampled_loss(&sample, &model, &world, 2.0, &mut rng).unwrap();
        assert!((drawn.value - exact.value).abs() < TOL);
        assert_eq!(drawn.aux.sampled_position, Some(1));
    }
}

#[test]
fn sampled_hps_high_gamma_locks_on_hardest() {
    let world = one_hot_world(4);
    let sample = est_sample(&[2.0, 0.9, 0.1, 0.5]);
    let model = rewards_model(&[0.0; 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let drawn = hps_sampled_loss(&sample, &model, &world, 50.0, &mut rng).unwrap();
        assert_eq!(drawn.aux.sampled_position, Some(1));
    }
}

#[test]
fn sampled_hps_draws_follow_q_and_keep_the_denominator_unbiased() {
    let world = one_hot_world(3);
    let r = [1.0, 0.25, -0.5];
    let model = rewards_model(&r);
    let sample = est_sample(&[5.0, 0.0, -1.0]);
    let q = hard_sampling_distribution(&sample, 1.0).unwrap().weights;

    let draws = 100_000usize;
    let mut counts = [0usize; 2];
    let mut exp_sum = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..draws {
        let drawn = hps_sampled_loss(&sample, &model, &world, 1.0, &mut rng).unwrap();
        let pos = drawn.aux.sampled_position.unwrap();
        counts[pos - 1] += 1;
        exp_sum += r[pos].exp();
    }
    let tv = 0.5
        * (0..2)
            .map(|i| (counts[i] as f64 / draws as f64 - q[i]).abs())
            .sum::<f64>();
    assert!(tv <= 0.01, "total variation {tv} too large");

    let target: f64 = q[0] * r[1].exp() + q[1] * r[2].exp();
    let mean = exp_sum / draws as f64;
    assert!(
        (mean - target).abs() / target <= 0.01,
        "denominator estimate {mean} vs expectation {target}"
    );
}

#[test]
fn weighted_hps_at_lambda_zero_matches_plain_hps() {
    let world = one_hot_world(4);
    let r = [1.4, 0.2, -0.3, -1.1];
    let model = rewards_model(&r);
    let sample = est_sample(&r);
    let weighted = weighted_hps_loss(&sample, &model, &world, 1.1, 0.0).unwrap();
    let plain = hps_exact_loss(&sample, &model, &world, 1.1).unwrap();
    assert!((weighted.value - plain.value).abs() < TOL);
    for (a, b) in weighted.gradient.iter().zip(&plain.gradient) {
        assert!((a - b).abs() < TOL);
    }
}

#[test]
fn weighted_hps_equal_rewards_pinned() {
    let world = one_hot_world(3);
    let sample = est_sample(&[0.0; 3]);
    let loss = weighted_hps_loss(&sample, &rewards_model(&[0.0; 3]), &world, 2.0, 1.0).unwrap();
    // ln 3 from the top level plus ln 2 from the second level.
    assert!((loss.value - LN_SIX).abs() < TOL);
}

#[test]
fn weighted_hps_needs_a_second_level() {
    let world = one_hot_world(2);
    let sample = est_sample(&[0.5, -0.5]);
    let err = weighted_hps_loss(&sample, &rewards_model(&[0.5, -0.5]), &world, 1.0, 0.5).unwrap_err();
    assert!(matches!(err, PrefError::MalformedSample(_)));
}

#[test]
fn lipo_flat_relevance_is_zero() {
    let world = one_hot_world(3);
    let sample = est_sample(&[0.9, 0.1, -0.4]);
    let loss = lipo_loss(&sample, &rewards_model(&[0.9, 0.1, -0.4]), &world, &[1.0; 3]).unwrap();
    assert_eq!(loss.value, 0.0);
    assert!(loss.gradient.iter().all(|g| *g == 0.0));
}

#[test]
fn lipo_pair_value_pinned() {
    let world = one_hot_world(2);
    let sample = est_sample(&[0.0, 0.0]);
    let loss = lipo_loss(&sample, &rewards_model(&[0.0, 0.0]), &world, &[1.0, 0.0]).unwrap();
    assert!((loss.value - LIPO_PAIR).abs() < TOL);
}

#[test]
fn lipo_is_nonnegative() {
    let world = one_hot_world(4);
    for r in [[1.0, -0.5, 0.25, 0.0], [-2.0, 1.5, 0.0, 3.0]] {
        let sample = est_sample(&r);
        let loss = lipo_loss(&sample, &rewards_model(&r), &world, &[3.0, 2.0, 1.0, 0.0]).unwrap();
        assert!(loss.value >= 0.0);
    }
}

#[test]
fn implicit_reward_vanishes_at_the_reference() {
    let world = world_with(vec![0.4, -1.2, 0.9], vec![12, 30, 7]);
    let model = RewardModel::DpoImplicit {
        logits: world.ref_logits.clone(),
        beta: 0.3,
    };
    for y in 0..3 {
        assert_eq!(model.reward(&world, 0, y), 0.0);
    }
}
