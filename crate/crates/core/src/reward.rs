//! Differentiable reward parameterizations r_θ(x, y).
//!
//! Four kinds are supported:
//!
//! ```text
//! linear        r = ⟨θ, φ(x,y)⟩
//! dpo_implicit  r = β · (log π_θ(y|x) − log π_ref(y|x))
//! kto           r = l(y) · (log π_θ(y|x) − log π_ref(y|x))
//! simpo         r = (β / |y|) · log π_θ(y|x)
//! ```
//!
//! The policy kinds (`dpo_implicit`, `kto`, `simpo`) use a tabular logit
//! table over each prompt's response pool — the smallest model class in which
//! the implicit-reward formula is exactly computable — with π the softmax of
//! the prompt's logit row. The per-prompt `β·log Z(x)` term of the implicit
//! reward is omitted: it is constant within a prompt and cancels in every
//! loss here, which only ever compares same-prompt rewards.

use serde::{Deserialize, Serialize};

use crate::error::{PrefError, Result};
use crate::numeric::{dot, logsumexp};
use crate::world::World;

/// KTO's normalizing factor l(y): a scalar or one value per (prompt, response).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LFactor {
    Scalar(f64),
    PerResponse(Vec<f64>),
}

impl LFactor {
    fn get(&self, flat_index: usize) -> f64 {
        match self {
            LFactor::Scalar(v) => *v,
            LFactor::PerResponse(vs) => vs[flat_index],
        }
    }

    fn validate(&self, table_len: usize) -> Result<()> {
        let ok = match self {
            LFactor::Scalar(v) => *v > 0.0,
            LFactor::PerResponse(vs) => vs.len() == table_len && vs.iter().all(|v| *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(PrefError::InvalidConfig("l_factor must be positive (and match the table length)".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    Linear { theta: Vec<f64> },
    DpoImplicit { logits: Vec<f64>, beta: f64 },
    Kto { logits: Vec<f64>, l_factor: LFactor },
    Simpo { logits: Vec<f64>, beta: f64 },
}

/// Tags for selecting a parameterization in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    DpoImplicit,
    Kto,
    Simpo,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::DpoImplicit => "dpo_implicit",
            ModelKind::Kto => "kto",
            ModelKind::Simpo => "simpo",
        }
    }
}

impl RewardModel {
    /// Zero-initialized model of the given kind, sized for `world`.
    pub fn zeroed(kind: ModelKind, world: &World, beta: f64) -> Result<Self> {
        if beta <= 0.0 {
            return Err(PrefError::InvalidConfig("beta must be positive".into()));
        }
        let table = vec![0.0; world.table_len()];
        Ok(match kind {
            ModelKind::Linear => RewardModel::Linear {
                theta: vec![0.0; world.dim()],
            },
            ModelKind::DpoImplicit => RewardModel::DpoImplicit { logits: table, beta },
            ModelKind::Kto => RewardModel::Kto {
                logits: table,
                l_factor: LFactor::Scalar(1.0),
            },
            ModelKind::Simpo => RewardModel::Simpo { logits: table, beta },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            RewardModel::Linear { .. } => ModelKind::Linear,
            RewardModel::DpoImplicit { .. } => ModelKind::DpoImplicit,
            RewardModel::Kto { .. } => ModelKind::Kto,
            RewardModel::Simpo { .. } => ModelKind::Simpo,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn is_policy(&self) -> bool {
        !matches!(self, RewardModel::Linear { .. })
    }

    pub fn params(&self) -> &[f64] {
        match self {
            RewardModel::Linear { theta } => theta,
            RewardModel::DpoImplicit { logits, .. } | RewardModel::Kto { logits, .. } | RewardModel::Simpo { logits, .. } => logits,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            RewardModel::Linear { theta } => theta,
            RewardModel::DpoImplicit { logits, .. } | RewardModel::Kto { logits, .. } | RewardModel::Simpo { logits, .. } => logits,
        }
    }

    pub fn validate(&self, world: &World) -> Result<()> {
        let expected = match self {
            RewardModel::Linear { .. } => world.dim(),
            _ => world.table_len(),
        };
        if self.params().len() != expected {
            return Err(PrefError::DimMismatch {
                expected,
                got: self.params().len(),
            });
        }
        if !self.params().iter().all(|v| v.is_finite()) {
            return Err(PrefError::InvalidConfig("non-finite parameter".into()));
        }
        match self {
            RewardModel::DpoImplicit { beta, .. } | RewardModel::Simpo { beta, .. } if *beta <= 0.0 => {
                Err(PrefError::InvalidConfig("beta must be positive".into()))
            }
            RewardModel::Kto { l_factor, .. } => l_factor.validate(world.table_len()),
            _ => Ok(()),
        }
    }

    fn logit_row<'a>(logits: &'a [f64], world: &World, prompt: u32) -> &'a [f64] {
        let r = world.pool_size();
        let base = prompt as usize * r;
        &logits[base..base + r]
    }

    /// log π_θ(y|x) under the tabular policy; errors for the linear kind.
    pub fn log_prob(&self, world: &World, prompt: u32, response: u32) -> Result<f64> {
        match self {
            RewardModel::Linear { .. } => Err(PrefError::IncompatibleLoss {
                loss: "log_prob",
                kind: "linear",
            }),
            RewardModel::DpoImplicit { logits, .. } | RewardModel::Kto { logits, .. } | RewardModel::Simpo { logits, .. } => {
                let row = Self::logit_row(logits, world, prompt);
                Ok(row[response as usize] - logsumexp(row))
            }
        }
    }

    fn log_ratio(logits: &[f64], world: &World, prompt: u32, response: u32) -> f64 {
        let row = Self::logit_row(logits, world, prompt);
        let ref_row = world.ref_logit_row(prompt);
        (row[response as usize] - logsumexp(row)) - (ref_row[response as usize] - logsumexp(ref_row))
    }

    /// The reward value r_θ(x, y).
    pub fn reward(&self, world: &World, prompt: u32, response: u32) -> f64 {
        match self {
            RewardModel::Linear { theta } => dot(theta, world.feature(prompt, response)),
            RewardModel::DpoImplicit { logits, beta } => beta * Self::log_ratio(logits, world, prompt, response),
            RewardModel::Kto { logits, l_factor } => {
                l_factor.get(world.flat_index(prompt, response)) * Self::log_ratio(logits, world, prompt, response)
            }
            RewardModel::Simpo { logits, beta } => {
                let row = Self::logit_row(logits, world, prompt);
                let lp = row[response as usize] - logsumexp(row);
                beta / world.length(prompt, response) as f64 * lp
            }
        }
    }

    /// Per-response scale factor in ∇r = scale · (onehot − π) for policy kinds.
    fn grad_scale(&self, world: &World, prompt: u32, response: u32) -> f64 {
        match self {
            RewardModel::Linear { .. } => 1.0,
            RewardModel::DpoImplicit { beta, .. } => *beta,
            RewardModel::Kto { l_factor, .. } => l_factor.get(world.flat_index(prompt, response)),
            RewardModel::Simpo { beta, .. } => beta / world.length(prompt, response) as f64,
        }
    }

    /// Dense gradient of one reward, as a fresh parameter-space vector.
    pub fn reward_gradient(&self, world: &World, prompt: u32, response: u32) -> Vec<f64> {
        let mut g = vec![0.0; self.params().len()];
        self.accumulate_reward_grad(world, prompt, &[response], &[1.0], &mut g);
        g
    }

    /// Adds `Σ_i coefs[i] · ∇r_θ(prompt, responses[i])` into `out`.
    ///
    /// All responses must share the prompt, so policy kinds compute the
    /// prompt's softmax once and scatter every one-hot term against it.
    pub fn accumulate_reward_grad(&self, world: &World, prompt: u32, responses: &[u32], coefs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(responses.len(), coefs.len());
        match self {
            RewardModel::Linear { theta } => {
                debug_assert_eq!(out.len(), theta.len());
                for (&y, &c) in responses.iter().zip(coefs) {
                    for (o, &f) in out.iter_mut().zip(world.feature(prompt, y)) {
                        *o += c * f;
                    }
                }
            }
            RewardModel::DpoImplicit { logits, .. } | RewardModel::Kto { logits, .. } | RewardModel::Simpo { logits, .. } => {
                let pool = world.pool_size();
                let base = prompt as usize * pool;
                let row = &logits[base..base + pool];
                let lse = logsumexp(row);
                let out_row = &mut out[base..base + pool];
                let mut total = 0.0;
                for (&y, &c) in responses.iter().zip(coefs) {
                    let w = c * self.grad_scale(world, prompt, y);
                    out_row[y as usize] += w;
                    total += w;
                }
                if total != 0.0 {
                    for (o, &l) in out_row.iter_mut().zip(row) {
                        *o -= total * (l - lse).exp();
                    }
                }
            }
        }
    }

    /// Adds `Σ_i coefs[i] · ∇ log π_θ(responses[i] | prompt)` into `out`
    /// (the unscaled policy gradient used by the hinge losses).
    pub fn accumulate_logprob_grad(&self, world: &World, prompt: u32, responses: &[u32], coefs: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            RewardModel::Linear { .. } => Err(PrefError::IncompatibleLoss {
                loss: "log_prob",
                kind: "linear",
            }),
            RewardModel::DpoImplicit { logits, .. } | RewardModel::Kto { logits, .. } | RewardModel::Simpo { logits, .. } => {
                let pool = world.pool_size();
                let base = prompt as usize * pool;
                let row = &logits[base..base + pool];
                let lse = logsumexp(row);
                let out_row = &mut out[base..base + pool];
                let mut total = 0.0;
                for (&y, &c) in responses.iter().zip(coefs) {
                    out_row[y as usize] += c;
                    total += c;
                }
                if total != 0.0 {
                    for (o, &l) in out_row.iter_mut().zip(row) {
                        *o -= total * (l - lse).exp();
                    }
                }
                Ok(())
            }
        }
    }
}
