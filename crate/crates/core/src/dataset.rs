//! Preference data: the Plackett-Luce ranking model, its exact sampler, and
//! dataset generation/annotation on top of a [`World`].
//!
//! Under Plackett-Luce the probability of observing the full ranking
//! `y_τ(1) ≻ y_τ(2) ≻ … ≻ y_τ(n)` is a chain of softmax choices,
//!
//! ```text
//! p(τ) = Π_{j=1..n}  exp(r_τ(j)) / Σ_{k=j..n} exp(r_τ(k)),
//! ```
//!
//! i.e. pick the winner among all n, then the winner among the rest, and so
//! on. At n = 2 this degenerates to the Bradley-Terry model.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{PrefError, Result};
use crate::numeric::logsumexp;
use crate::world::World;

/// One prompt with `n` responses in ranked order (index 0 holds the most
/// preferred response `y_τ(1)`), plus per-response estimated rewards and
/// synthetic token lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSample {
    pub prompt_id: u32,
    #[serde(rename = "responses")]
    pub ranked_responses: Vec<u32>,
    pub est_rewards: Vec<f64>,
    pub lengths: Vec<u32>,
}

impl PreferenceSample {
    pub fn n(&self) -> usize {
        self.ranked_responses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(PrefError::MalformedSample("need at least two responses".into()));
        }
        if self.est_rewards.len() != n || self.lengths.len() != n {
            return Err(PrefError::MalformedSample("field lengths disagree".into()));
        }
        if !self.est_rewards.iter().all(|r| r.is_finite()) {
            return Err(PrefError::MalformedSample("non-finite est_reward".into()));
        }
        let mut seen = self.ranked_responses.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n {
            return Err(PrefError::MalformedSample("duplicate response ids".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub samples: Vec<PreferenceSample>,
    /// Config hash of the generating world.
    pub world_ref: String,
    /// Common ranking length.
    pub n: usize,
}

impl PreferenceDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Full structural check against the generating world: every sample
    /// well-formed with the common n, all ids resolvable, hash matching.
    /// Called once at the boundary; the hot loss paths only re-check shape.
    pub fn validate(&self, world: &World) -> Result<()> {
        if self.is_empty() {
            return Err(PrefError::InvalidConfig("dataset is empty".into()));
        }
        let hash = world.config_hash();
        if self.world_ref != hash {
            return Err(PrefError::WorldMismatch {
                expected: self.world_ref.clone(),
                got: hash,
            });
        }
        for sample in &self.samples {
            sample.validate()?;
            if sample.n() != self.n {
                return Err(PrefError::MalformedSample(format!(
                    "sample on prompt {} has {} responses, dataset n is {}",
                    sample.prompt_id,
                    sample.n(),
                    self.n
                )));
            }
            for &y in &sample.ranked_responses {
                world.check_ids(sample.prompt_id, y)?;
            }
        }
        Ok(())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(PrefError::InvalidPermutation { n });
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(PrefError::InvalidPermutation { n });
        }
        seen[p] = true;
    }
    Ok(())
}

/// Exact Plackett-Luce probability of `perm` given per-item rewards,
/// computed in log space.
pub fn pl_rank_probability(rewards: &[f64], perm: &[usize]) -> Result<f64> {
    let n = rewards.len();
    check_permutation(perm, n)?;
    let ordered: Vec<f64> = perm.iter().map(|&i| rewards[i]).collect();
    let mut log_p = 0.0;
    for j in 0..n {
        log_p += ordered[j] - logsumexp(&ordered[j..]);
    }
    Ok(log_p.exp())
}

/// Draws a ranking from the Plackett-Luce distribution by sequential
/// softmax sampling without replacement. The output distribution equals
/// [`pl_rank_probability`] exactly.
pub fn sample_ranking<R: Rng>(rewards: &[f64], rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..rewards.len()).collect();
    let mut out = Vec::with_capacity(rewards.len());
    while remaining.len() > 1 {
        let mx = remaining.iter().map(|&i| rewards[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (rewards[i] - mx).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = k;
                break;
            }
        }
        out.push(remaining.swap_remove(pick));
    }
    out.extend(remaining);
    out
}

/// Generates `m` samples: a uniform prompt, `n` distinct pool responses, and
/// a Plackett-Luce ranking under the ground-truth reward r*.
///
/// `est_rewards` are left at zero; see [`annotate_rewards`].
pub fn generate_dataset<R: Rng>(world: &World, m: usize, n: usize, rng: &mut R) -> Result<PreferenceDataset> {
    let pool = world.pool_size();
    if n < 2 || n > pool {
        return Err(PrefError::InvalidConfig(format!(
            "ranking length {n} must lie in [2, pool size {pool}]"
        )));
    }
    let mut samples = Vec::with_capacity(m);
    let mut candidates: Vec<u32> = (0..pool as u32).collect();
    for _ in 0..m {
        let prompt = rng.random_range(0..world.prompt_count()) as u32;
        candidates.shuffle(rng);
        let chosen = &candidates[..n];
        let rewards: Vec<f64> = chosen.iter().map(|&y| world.true_reward(prompt, y)).collect();
        let perm = sample_ranking(&rewards, rng);
        let ranked: Vec<u32> = perm.iter().map(|&j| chosen[j]).collect();
        let lengths = ranked.iter().map(|&y| world.length(prompt, y)).collect();
        samples.push(PreferenceSample {
            prompt_id: prompt,
            ranked_responses: ranked,
            est_rewards: vec![0.0; n],
            lengths,
        });
    }
    Ok(PreferenceDataset {
        samples,
        world_ref: world.config_hash(),
        n,
    })
}

/// How [`annotate_rewards`] fills `est_rewards`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnnotateMode {
    /// est = r*(x, y) exactly.
    GroundTruth,
    /// est = r*(x, y) + N(0, σ²).
    Noisy { sigma: f64 },
}

/// Fills every sample's `est_rewards` from the world's ground truth,
/// optionally perturbed by Gaussian noise. Deterministic in `seed`.
pub fn annotate_rewards(dataset: &mut PreferenceDataset, world: &World, mode: AnnotateMode, seed: u64) -> Result<()> {
    let expected = world.config_hash();
    if dataset.world_ref != expected {
        return Err(PrefError::WorldMismatch {
            expected,
            got: dataset.world_ref.clone(),
        });
    }
    let sigma = match mode {
        AnnotateMode::GroundTruth => 0.0,
        AnnotateMode::Noisy { sigma } => {
            if !(sigma >= 0.0) {
                return Err(PrefError::InvalidConfig("noise sigma must be >= 0".into()));
            }
            sigma
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for sample in &mut dataset.samples {
        for (slot, &y) in sample.est_rewards.iter_mut().zip(&sample.ranked_responses) {
            let mut v = world.true_reward(sample.prompt_id, y);
            if sigma > 0.0 {
                v += sigma * rng.sample::<f64, _>(noise);
            }
            *slot = v;
        }
    }
    Ok(())
}
