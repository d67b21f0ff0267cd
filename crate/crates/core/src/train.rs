//! Mini-batch (projected) gradient descent over any loss/parameterization
//! pair, plus a full-batch solver with backtracking line search for the
//! convex estimator fits.
//!
//! Determinism contract: identical (dataset, config, seed) produce
//! bit-identical traces. Batch gradients accumulate sequentially in sample
//! order, all randomness flows through two ChaCha streams derived from the
//! run seed (one for shuffling, one for the sampled-loss draws), and every
//! reward evaluation is counted exactly.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PreferenceDataset;
use crate::error::{PrefError, Result};
use crate::jsonio;
use crate::loss::{sample_loss_into, Evaluator, HpsDenominator, LossKind};
use crate::numeric::l2_norm;
use crate::reward::{ModelKind, RewardModel};
use crate::world::{derive_seed, World};

/// γ over training: either fixed or a piecewise-constant ramp with
/// `num_levels` equal segments (the -5 → 5 staircase by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum GammaSchedule {
    Constant { gamma: f64 },
    LinearSteps { start: f64, end: f64, num_levels: usize },
}

impl Default for GammaSchedule {
    fn default() -> Self {
        GammaSchedule::LinearSteps {
            start: -5.0,
            end: 5.0,
            num_levels: 5,
        }
    }
}

/// γ at `step` of `total_steps`. Level k of a ramp spans steps
/// [k·total/num_levels, (k+1)·total/num_levels) and holds the value
/// start + (end − start)·k/(num_levels − 1).
pub fn gamma_at(cfg: &GammaSchedule, step: usize, total_steps: usize) -> Result<f64> {
    if step >= total_steps {
        return Err(PrefError::InvalidConfig(format!(
            "schedule step {step} out of range for {total_steps} total steps"
        )));
    }
    Ok(match *cfg {
        GammaSchedule::Constant { gamma } => gamma,
        GammaSchedule::LinearSteps { start, end, num_levels } => {
            if num_levels <= 1 {
                start
            } else {
                let level = (num_levels * step / total_steps).min(num_levels - 1);
                start + (end - start) * level as f64 / (num_levels - 1) as f64
            }
        }
    })
}

/// Scales θ onto the radius-B ball if it lies outside (Euclidean
/// projection); interior points pass through untouched.
pub fn project_to_ball(theta: &mut [f64], b: f64) {
    let norm = l2_norm(theta);
    if norm > b {
        let scale = b / norm;
        for t in theta {
            *t *= scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    /// Adam with the standard moment defaults; pair with lr 5e-3 for the
    /// desk-scale runs.
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Euclidean ball projection after each step, when set.
    #[serde(default)]
    pub ball_radius: Option<f64>,
    /// Coordinate-wise box clamp |θ_i| ≤ c after each step, when set.
    #[serde(default)]
    pub param_clamp: Option<f64>,
    #[serde(default)]
    pub gamma: GammaSchedule,
    #[serde(default)]
    pub hps_form: HpsDenominator,
    pub seed: u64,
    /// Stop early once the full-batch gradient norm drops below this.
    #[serde(default)]
    pub convergence_grad_tol: Option<f64>,
}

impl TrainConfig {
    pub fn new(loss: LossKind, optimizer: OptimizerKind, learning_rate: f64, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            loss,
            optimizer,
            learning_rate,
            epochs,
            batch_size,
            ball_radius: None,
            param_clamp: None,
            gamma: GammaSchedule::default(),
            hps_form: HpsDenominator::default(),
            seed,
            convergence_grad_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(PrefError::InvalidConfig(format!(
                "learning_rate must be a positive real, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PrefError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if let GammaSchedule::LinearSteps { num_levels, .. } = self.gamma {
            if num_levels == 0 {
                return Err(PrefError::InvalidConfig("gamma schedule needs at least one level".into()));
            }
        }
        if let Some(b) = self.ball_radius {
            if !(b > 0.0) {
                return Err(PrefError::InvalidConfig(format!("ball_radius must be positive, got {b}")));
            }
        }
        if let Some(c) = self.param_clamp {
            if !(c >= 0.0) {
                return Err(PrefError::InvalidConfig(format!("param_clamp must be nonnegative, got {c}")));
            }
        }
        if let Some(t) = self.convergence_grad_tol {
            if !(t > 0.0) {
                return Err(PrefError::InvalidConfig(format!("convergence_grad_tol must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Everything a finished run leaves behind. Traces hold one entry per
/// optimizer step; `reward_eval_count` is exact by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub final_params: RewardModel,
    pub loss_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub reward_eval_count: u64,
    pub wall_time_ms: f64,
    pub steps: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl RunRecord {
    /// Step-by-step trace as TSV: step, loss, gamma, grad_norm.
    pub fn write_trace_tsv(&self, path: &std::path::Path) -> Result<()> {
        let rows: Vec<Vec<String>> = (0..self.loss_trace.len())
            .map(|i| {
                vec![
                    i.to_string(),
                    jsonio::tsv_float(self.loss_trace[i]),
                    jsonio::tsv_float(self.gamma_trace[i]),
                    jsonio::tsv_float(self.grad_norm_trace[i]),
                ]
            })
            .collect();
        jsonio::write_tsv(path, &["step", "loss", "gamma", "grad_norm"], &rows)
    }
}

fn constrain(model: &mut RewardModel, ball: Option<f64>, clamp: Option<f64>) {
    if let Some(b) = ball {
        project_to_ball(model.params_mut(), b);
    }
    if let Some(c) = clamp {
        for p in model.params_mut() {
            *p = p.clamp(-c, c);
        }
    }
}

/// Mean loss and gradient over `indices` of the dataset; returns the number
/// of reward evaluations spent.
fn batch_objective(
    model: &RewardModel,
    world: &World,
    dataset: &PreferenceDataset,
    indices: &[usize],
    loss: &LossKind,
    gamma: f64,
    form: HpsDenominator,
    rng: &mut ChaCha8Rng,
    grad: Option<&mut [f64]>,
) -> Result<(f64, u64)> {
    let mut ev = Evaluator::new(model, world);
    let mut total = 0.0;
    let inv = 1.0 / indices.len() as f64;
    match grad {
        Some(out) => {
            for &i in indices {
                let (v, _) = sample_loss_into(loss, &dataset.samples[i], &mut ev, gamma, form, rng, Some(out))?;
                total += v;
            }
            for g in out.iter_mut() {
                *g *= inv;
            }
        }
        None => {
            for &i in indices {
                let (v, _) = sample_loss_into(loss, &dataset.samples[i], &mut ev, gamma, form, rng, None)?;
                total += v;
            }
        }
    }
    Ok((total * inv, ev.reward_evals))
}

/// Runs mini-batch (projected) gradient descent from `init` and returns the
/// full record. Stops at the epoch budget, or earlier once the full-batch
/// gradient norm falls below `convergence_grad_tol`.
pub fn train(dataset: &PreferenceDataset, world: &World, init: &RewardModel, cfg: &TrainConfig) -> Result<RunRecord> {
    cfg.validate()?;
    dataset.validate(world)?;
    init.validate(world)?;
    if matches!(cfg.loss, LossKind::Slic { .. }) && init.kind() == ModelKind::Linear {
        return Err(PrefError::IncompatibleLoss {
            loss: "slic",
            kind: "linear",
        });
    }

    let start = Instant::now();
    let m = dataset.len();
    let batches_per_epoch = m.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let full_batch = cfg.batch_size >= m;

    let mut model = init.clone();
    let dim = model.params().len();
    let mut grad = vec![0.0; dim];
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut loss_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "loss-draws"));
    let mut indices: Vec<usize> = (0..m).collect();

    let mut adam_m = vec![0.0; dim];
    let mut adam_v = vec![0.0; dim];

    let mut loss_trace = Vec::with_capacity(total_steps);
    let mut gamma_trace = Vec::with_capacity(total_steps);
    let mut grad_norm_trace = Vec::with_capacity(total_steps);
    let mut reward_evals: u64 = 0;
    let mut step = 0usize;

    'epochs: for _ in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut last_grad_norm = f64::INFINITY;
        for chunk in indices.chunks(cfg.batch_size) {
            let gamma = gamma_at(&cfg.gamma, step, total_steps)?;
            grad.fill(0.0);
            let (mean_loss, evals) =
                batch_objective(&model, world, dataset, chunk, &cfg.loss, gamma, cfg.hps_form, &mut loss_rng, Some(&mut grad))?;
            reward_evals += evals;
            if !mean_loss.is_finite() {
                return Err(PrefError::Diverged { step, loss: mean_loss });
            }
            let gn = l2_norm(&grad);
            last_grad_norm = gn;

            match cfg.optimizer {
                OptimizerKind::Sgd => {
                    let params = model.params_mut();
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = (step + 1) as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let params = model.params_mut();
                    for i in 0..dim {
                        adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * grad[i];
                        adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let mhat = adam_m[i] / c1;
                        let vhat = adam_v[i] / c2;
                        params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            constrain(&mut model, cfg.ball_radius, cfg.param_clamp);

            loss_trace.push(mean_loss);
            gamma_trace.push(gamma);
            grad_norm_trace.push(gn);
            step += 1;
        }

        if let Some(tol) = cfg.convergence_grad_tol {
            // In full-batch mode the last step's gradient already covers the
            // whole dataset; otherwise spend one extra full pass to measure.
            let full_norm = if full_batch {
                last_grad_norm
            } else {
                grad.fill(0.0);
                let all: Vec<usize> = (0..m).collect();
                let gamma = gamma_at(&cfg.gamma, step.saturating_sub(1), total_steps)?;
                let (_, evals) =
                    batch_objective(&model, world, dataset, &all, &cfg.loss, gamma, cfg.hps_form, &mut loss_rng, Some(&mut grad))?;
                reward_evals += evals;
                l2_norm(&grad)
            };
            if full_norm <= tol {
                break 'epochs;
            }
        }
    }
    Ok(RunRecord {
        final_params: model,
        loss_trace,
        gamma_trace,
        grad_norm_trace,
        reward_eval_count: reward_evals,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        steps: step,
        seed: cfg.seed,
        config_hash: jsonio::value_hash(cfg),
    })
}

/// Convergence report of [`fit_full_batch`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitStats {
    pub iters: usize,
    /// Gradient norm at exit (gradient-mapping norm when projected).
    pub grad_norm: f64,
    pub converged: bool,
    pub final_loss: f64,
}

/// Full-batch (projected) gradient descent with Armijo backtracking, for
/// the convex linear-reward objectives where the argmin itself is the
/// deliverable. Stops when the gradient (or gradient-mapping) norm reaches
/// `tol`, or after `max_iters` descent steps.
pub fn fit_full_batch(
    dataset: &PreferenceDataset,
    world: &World,
    init: &RewardModel,
    loss: &LossKind,
    gamma: f64,
    form: HpsDenominator,
    ball_radius: Option<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<(RewardModel, FitStats)> {
    dataset.validate(world)?;
    init.validate(world)?;
    let m = dataset.len();
    let all: Vec<usize> = (0..m).collect();
    let dim = init.params().len();

    let mut model = init.clone();
    constrain(&mut model, ball_radius, None);
    let mut probe = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut grad = vec![0.0; dim];
    let (mut f, _) = batch_objective(&model, world, dataset, &all, loss, gamma, form, &mut rng, Some(&mut grad))?;
    let mut lr = 1.0;
    let mut iters = 0;
    let mut exit_norm = l2_norm(&grad);
    let mut converged = exit_norm <= tol;

    while iters < max_iters && !converged {
        // Candidate step with projection folded in, then Armijo on the
        // actual displacement: f(θ⁺) ≤ f(θ) − (σ/lr)·‖θ − θ⁺‖².
        let mut accepted = false;
        while lr >= 1e-18 {
            {
                let cur = model.params();
                let next = probe.params_mut();
                for i in 0..dim {
                    next[i] = cur[i] - lr * grad[i];
                }
            }
            constrain(&mut probe, ball_radius, None);
            let step_sq: f64 = model
                .params()
                .iter()
                .zip(probe.params())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let (f_new, _) = batch_objective(&probe, world, dataset, &all, loss, gamma, form, &mut rng, None)?;
            if f_new <= f - 1e-4 / lr * step_sq && f_new.is_finite() {
                std::mem::swap(&mut model, &mut probe);
                f = f_new;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break; // step size underflow: no further progress possible
        }
        grad.fill(0.0);
        let (f_check, _) = batch_objective(&model, world, dataset, &all, loss, gamma, form, &mut rng, Some(&mut grad))?;
        f = f_check;
        iters += 1;
        lr = (lr * 2.0).min(1e6);

        exit_norm = if ball_radius.is_some() {
            // Projected-gradient mapping at unit step length.
            let cur = model.params();
            let next = probe.params_mut();
            for i in 0..dim {
                next[i] = cur[i] - grad[i];
            }
            constrain(&mut probe, ball_radius, None);
            let mapping_sq: f64 = model
                .params()
                .iter()
                .zip(probe.params())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            mapping_sq.sqrt()
        } else {
            l2_norm(&grad)
        };
        converged = exit_norm <= tol;
    }

    Ok((
        model,
        FitStats {
            iters,
            grad_norm: exit_norm,
            converged,
            final_loss: f,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_staircase_matches_ramp() {
        let cfg = GammaSchedule::default();
        assert_eq!(gamma_at(&cfg, 0, 100).unwrap(), -5.0);
        assert_eq!(gamma_at(&cfg, 20, 100).unwrap(), -2.5);
        assert_eq!(gamma_at(&cfg, 50, 100).unwrap(), 0.0);
        assert_eq!(gamma_at(&cfg, 99, 100).unwrap(), 5.0);
        assert!(gamma_at(&cfg, 100, 100).is_err());
        let c = GammaSchedule::Constant { gamma: 3.0 };
        assert_eq!(gamma_at(&c, 7, 10).unwrap(), 3.0);
    }

    #[test]
    fn projection_scales_only_outside() {
        let mut v = vec![3.0, 4.0];
        project_to_ball(&mut v, 1.0);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let mut w = vec![0.1, 0.0];
        project_to_ball(&mut w, 1.0);
        assert_eq!(w, vec![0.1, 0.0]);
        let mut z = vec![0.0, 0.0];
        project_to_ball(&mut z, 1.0);
        assert_eq!(z, vec![0.0, 0.0]);
    }
}
