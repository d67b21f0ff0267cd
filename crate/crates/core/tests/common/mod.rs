//! Hand-auditable fixtures shared by the integration tests.
//!
//! Most value oracles here run on one-prompt worlds with one-hot features,
//! so a linear model's parameter vector *is* the per-response reward table
//! and every loss value can be recomputed on paper.

#![allow(dead_code)]

pub mod fixtures;

use preflab_core::{
    annotate_rewards, build_world, generate_dataset, loss_gradient_check, AnnotateMode, HpsDenominator, LossKind,
    ModelKind, PreferenceSample, RewardModel, World, WorldConfig,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One-prompt world with `k` responses, phi(y_i) = e_i, zero reference
/// logits, and every length equal to 10.
pub fn one_hot_world(k: usize) -> World {
    world_with(vec![0.0; k], vec![10; k])
}

/// One-prompt one-hot world with explicit reference logits and lengths
/// (both indexed by response id).
pub fn world_with(ref_logits: Vec<f64>, lengths: Vec<u32>) -> World {
    let k = ref_logits.len();
    assert_eq!(lengths.len(), k, "ref_logits and lengths must agree");
    let mut features = vec![0.0; k * k];
    for i in 0..k {
        features[i * k + i] = 1.0;
    }
    World {
        config: WorldConfig::new(1, k, k, 100.0),
        seed: 0,
        theta_star: vec![0.0; k],
        features,
        ref_logits,
        lengths,
    }
}

/// Sample ranking the full pool in id order (response i at rank i+1) with
/// the given estimated rewards.
pub fn est_sample(est: &[f64]) -> PreferenceSample {
    ranked_sample((0..est.len() as u32).collect(), est.to_vec(), vec![10; est.len()])
}

/// Fully explicit sample; `est` and `lengths` are in rank order.
pub fn ranked_sample(ranking: Vec<u32>, est: Vec<f64>, lengths: Vec<u32>) -> PreferenceSample {
    let sample = PreferenceSample {
        prompt_id: 0,
        ranked_responses: ranking,
        est_rewards: est,
        lengths,
    };
    sample.validate().expect("fixture sample must be well-formed");
    sample
}

/// Linear model over a one-hot world: reward(y_i) = r[i].
pub fn rewards_model(r: &[f64]) -> RewardModel {
    RewardModel::Linear { theta: r.to_vec() }
}

/// Worst relative error between analytic and central-difference gradients
/// for one (loss, parameterization) pair over `points` random instances.
///
/// Each point gets its own sample (rankings of length 5 from a 3-prompt
/// world), noisy reward estimates, and parameters drawn uniformly from
/// [-1, 1], so the hard-sampling weights and hinge activations vary across
/// points. Step h = 1e-5 throughout.
///
/// The world's reward scale is kept at O(1) deliberately: the lambda loss
/// exponentiates its relevance scores (the estimates), and a loss value of
/// magnitude V puts ~V·eps/(2h) of cancellation noise into every central
/// difference, which must stay well under the 1e-5 acceptance line.
pub fn grad_sweep(kind: &LossKind, model_kind: ModelKind, points: usize, seed: u64) -> f64 {
    let world = build_world(&WorldConfig::new(3, 6, 4, 1.0), 91).expect("gradcheck world");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = generate_dataset(&world, points, 5, &mut rng).expect("gradcheck dataset");
    annotate_rewards(&mut dataset, &world, AnnotateMode::Noisy { sigma: 0.25 }, seed ^ 0xA5).expect("annotate");
    let mut worst: f64 = 0.0;
    for (i, sample) in dataset.samples.iter().enumerate() {
        let mut model = RewardModel::zeroed(model_kind, &world, 0.7).expect("init");
        for p in model.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let err = loss_gradient_check(kind, sample, &model, &world, 1.3, HpsDenominator::ScaledByN, i as u64, 1e-5)
            .expect("gradient check evaluates");
        worst = worst.max(err);
    }
    worst
}
