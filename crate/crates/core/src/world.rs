//! Synthetic preference worlds: a finite prompt/response universe with known
//! ground-truth rewards.
//!
//! A world holds, for every `(prompt, response)` pair, a feature vector
//! `φ(x,y)` with `‖φ‖₂ ≤ 1`, a reference-policy logit, and a synthetic token
//! length. The ground-truth reward is linear,
//!
//! ```text
//! r*(x, y) = ⟨θ*, φ(x, y)⟩,   ‖θ*‖₂ ≤ B,
//! ```
//!
//! which keeps the maximum-likelihood experiments convex and the estimator
//! error well-defined. Everything is a pure function of `(config, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PrefError, Result};
use crate::jsonio;
use crate::numeric::{dot, l2_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub prompt_count: usize,
    pub responses_per_prompt: usize,
    pub feature_dim: usize,
    /// Radius of the ball that contains θ*. Zero forces θ* = 0.
    pub ball_radius: f64,
    /// Inclusive range for synthetic token lengths.
    #[serde(default = "default_length_range")]
    pub length_range: (u32, u32),
}

fn default_length_range() -> (u32, u32) {
    (4, 64)
}

impl WorldConfig {
    pub fn new(prompt_count: usize, responses_per_prompt: usize, feature_dim: usize, ball_radius: f64) -> Self {
        Self {
            prompt_count,
            responses_per_prompt,
            feature_dim,
            ball_radius,
            length_range: default_length_range(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.prompt_count == 0 || self.responses_per_prompt == 0 || self.feature_dim == 0 {
            return Err(PrefError::InvalidConfig(
                "prompt_count, responses_per_prompt and feature_dim must be positive".into(),
            ));
        }
        if !self.ball_radius.is_finite() || self.ball_radius < 0.0 {
            return Err(PrefError::InvalidConfig("ball_radius must be finite and >= 0".into()));
        }
        if self.length_range.0 == 0 || self.length_range.0 > self.length_range.1 {
            return Err(PrefError::InvalidConfig("length_range must be a nonempty positive range".into()));
        }
        Ok(())
    }
}

/// The generated universe. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    /// Row-major `[prompt][response][dim]`, flattened.
    pub features: Vec<f64>,
    /// `[prompt][response]`, flattened.
    pub ref_logits: Vec<f64>,
    /// `[prompt][response]`, flattened.
    pub lengths: Vec<u32>,
}

/// Splits one master seed into decorrelated stream seeds: the tag is
/// FNV-1a-hashed, then mixed with the seed through a splitmix64 step.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds a world deterministically from `(config, seed)`.
///
/// Features are i.i.d. standard normal, then rescaled onto the unit ball
/// (`‖φ‖₂ ≤ 1`); θ* is uniform in the radius-B ball; reference logits are
/// standard normal; lengths are uniform integers in `length_range`.
pub fn build_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let (p, r, d) = (config.prompt_count, config.responses_per_prompt, config.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = vec![0.0; p * r * d];
    for chunk in features.chunks_mut(d) {
        for v in chunk.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = l2_norm(chunk);
        if norm > 1.0 {
            for v in chunk.iter_mut() {
                *v /= norm;
            }
        }
    }

    // Uniform in the ball: uniform direction times B·U^(1/d).
    let mut theta_star = vec![0.0; d];
    if config.ball_radius > 0.0 {
        loop {
            for v in theta_star.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = l2_norm(&theta_star);
            if norm > 1e-12 {
                let radius = config.ball_radius * rng.random::<f64>().powf(1.0 / d as f64);
                for v in theta_star.iter_mut() {
                    *v *= radius / norm;
                }
                break;
            }
        }
    }

    let ref_logits = (0..p * r).map(|_| rng.sample(StandardNormal)).collect();
    let lengths = (0..p * r)
        .map(|_| rng.random_range(config.length_range.0..=config.length_range.1))
        .collect();

    Ok(World {
        config: config.clone(),
        seed,
        theta_star,
        features,
        ref_logits,
        lengths,
    })
}

impl World {
    pub fn prompt_count(&self) -> usize {
        self.config.prompt_count
    }

    pub fn pool_size(&self) -> usize {
        self.config.responses_per_prompt
    }

    pub fn dim(&self) -> usize {
        self.config.feature_dim
    }

    /// Total number of parameters in a tabular policy over this world.
    pub fn table_len(&self) -> usize {
        self.config.prompt_count * self.config.responses_per_prompt
    }

    pub fn check_ids(&self, prompt: u32, response: u32) -> Result<()> {
        if (prompt as usize) < self.config.prompt_count && (response as usize) < self.config.responses_per_prompt {
            Ok(())
        } else {
            Err(PrefError::UnknownId { prompt, response })
        }
    }

    pub fn flat_index(&self, prompt: u32, response: u32) -> usize {
        prompt as usize * self.config.responses_per_prompt + response as usize
    }

    pub fn feature(&self, prompt: u32, response: u32) -> &[f64] {
        let d = self.config.feature_dim;
        let base = self.flat_index(prompt, response) * d;
        &self.features[base..base + d]
    }

    pub fn ref_logit_row(&self, prompt: u32) -> &[f64] {
        let r = self.config.responses_per_prompt;
        let base = prompt as usize * r;
        &self.ref_logits[base..base + r]
    }

    pub fn length(&self, prompt: u32, response: u32) -> u32 {
        self.lengths[self.flat_index(prompt, response)]
    }

    /// Ground-truth reward r*(x, y) = ⟨θ*, φ(x, y)⟩.
    pub fn true_reward(&self, prompt: u32, response: u32) -> f64 {
        dot(&self.theta_star, self.feature(prompt, response))
    }

    /// Hash of `(config, seed)`; datasets carry it to pin their provenance.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            config: &'a WorldConfig,
            seed: u64,
        }
        jsonio::value_hash(&Key {
            config: &self.config,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_forces_zero_theta() {
        let cfg = WorldConfig::new(2, 3, 1, 0.0);
        let w = build_world(&cfg, 5).unwrap();
        assert!(w.theta_star.iter().all(|&v| v == 0.0));
        assert_eq!(w.true_reward(0, 0), 0.0);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(build_world(&WorldConfig::new(0, 3, 2, 1.0), 1).is_err());
        assert!(build_world(&WorldConfig::new(3, 0, 2, 1.0), 1).is_err());
        assert!(build_world(&WorldConfig::new(3, 3, 0, 1.0), 1).is_err());
        assert!(build_world(&WorldConfig::new(3, 3, 2, -1.0), 1).is_err());
    }
}
