//! The training loss family: Plackett-Luce, Bradley-Terry, hard-preference
//! sampling (exact, single-sample, and weighted), plus the SLiC and LiPO-λ
//! baselines — all with analytic gradients.
//!
//! The hard-preference-sampling (HPS) loss reweights the dispreferred
//! responses of a ranking by how hard they are. With `q` the hardness
//! distribution of [`hard_sampling_distribution`] and `N = n − 1`,
//!
//! ```text
//! L_HPS = −log( e^{r₁} / (e^{r₁} + N · Σ_{i=2..n} q_i e^{r_i}) ),
//! q_i   = e^{γ·r_est(y_i)} / Σ_{k=2..n} e^{γ·r_est(y_k)}.
//! ```
//!
//! At γ = 0 the weights are uniform and the loss reduces to the plain softmax
//! (first Plackett-Luce stage); as γ → ∞ it converges to the limiting loss
//! with all mass on the hardest dispreferred response. The `N·Σ q e^r`
//! bookkeeping is the form that recovers the softmax loss under uniform q;
//! the unscaled alternative (`Σ q e^r` without the N factor) is available via
//! [`HpsDenominator::Plain`].
//!
//! All losses evaluate rewards through an [`Evaluator`], which counts every
//! reward evaluation — the efficiency experiments rely on those counts being
//! exact (per sample and step: 2 for the sampled HPS loss, n for PL).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PreferenceSample;
use crate::error::{PrefError, Result};
use crate::numeric::{finite_diff_grad, logsumexp, max_rel_err, sigmoid, softplus};
use crate::reward::RewardModel;
use crate::world::World;

/// Counts reward (and log-prob) evaluations against a fixed model.
pub struct Evaluator<'a> {
    pub model: &'a RewardModel,
    pub world: &'a World,
    pub reward_evals: u64,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a RewardModel, world: &'a World) -> Self {
        Self {
            model,
            world,
            reward_evals: 0,
        }
    }

    pub fn reward(&mut self, prompt: u32, response: u32) -> f64 {
        self.reward_evals += 1;
        self.model.reward(self.world, prompt, response)
    }

    pub fn log_prob(&mut self, prompt: u32, response: u32) -> Result<f64> {
        self.reward_evals += 1;
        self.model.log_prob(self.world, prompt, response)
    }
}

/// Which denominator bookkeeping the HPS losses use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpsDenominator {
    /// e^{r₁} + N·Σ q_i e^{r_i} — recovers the softmax loss at uniform q.
    #[default]
    ScaledByN,
    /// e^{r₁} + Σ q_i e^{r_i}.
    Plain,
}

/// Loss selector used by the trainer and the experiment runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossKind {
    Pl,
    Bt,
    HpsExact,
    HpsSampled,
    WeightedHps { lambda: f64 },
    Slic { delta: f64, lambda: f64 },
    Lipo,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Pl => "pl",
            LossKind::Bt => "bt",
            LossKind::HpsExact => "hps_exact",
            LossKind::HpsSampled => "hps_sampled",
            LossKind::WeightedHps { .. } => "weighted_hps",
            LossKind::Slic { .. } => "slic",
            LossKind::Lipo => "lipo",
        }
    }

    /// Whether the γ schedule applies (it only drives the HPS family).
    pub fn uses_gamma(&self) -> bool {
        matches!(self, LossKind::HpsExact | LossKind::HpsSampled | LossKind::WeightedHps { .. })
    }
}

/// Normalized hardness distribution over the n−1 dispreferred responses
/// (index i aligns with ranked position i+1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSamplingWeights {
    pub gamma: f64,
    pub weights: Vec<f64>,
}

/// softmax(γ · est) in log space over `est` (a dispreferred slice).
fn log_hard_weights(est_dispreferred: &[f64], gamma: f64) -> Vec<f64> {
    let scaled: Vec<f64> = est_dispreferred.iter().map(|&e| gamma * e).collect();
    let lse = logsumexp(&scaled);
    scaled.iter().map(|&s| s - lse).collect()
}

/// Cheap structural guard for the hot loss paths. Full validation (duplicate
/// ids, finiteness) happens once at the dataset boundary, not per evaluation.
fn guard(sample: &PreferenceSample, min_n: usize) -> Result<()> {
    let n = sample.ranked_responses.len();
    if n < min_n || sample.est_rewards.len() != n {
        return Err(PrefError::MalformedSample(format!(
            "need at least {min_n} aligned responses, got {n} with {} estimates",
            sample.est_rewards.len()
        )));
    }
    Ok(())
}

/// q_i ∝ exp(γ · r_est(y_τ(i))) over the dispreferred responses i = 2..n.
pub fn hard_sampling_distribution(sample: &PreferenceSample, gamma: f64) -> Result<HardSamplingWeights> {
    guard(sample, 2)?;
    let weights = log_hard_weights(&sample.est_rewards[1..], gamma)
        .into_iter()
        .map(f64::exp)
        .collect();
    Ok(HardSamplingWeights { gamma, weights })
}

/// Extra outputs attached to a [`LossValue`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossAux {
    /// Ranked position of the drawn dispreferred response (sampled HPS only).
    pub sampled_position: Option<usize>,
    /// Per-position loss terms where a breakdown is natural.
    pub terms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Parameter-space gradient, same indexing as `model.params()`.
    pub gradient: Vec<f64>,
    pub aux: LossAux,
}

/// Shared HPS core: `r[0]` is the preferred reward, `r[1..]` the dispreferred
/// rewards aligned with `log_q`. Returns the loss value and ∂L/∂r.
fn hps_core(r: &[f64], log_q: &[f64], form: HpsDenominator) -> (f64, Vec<f64>) {
    let n = r.len();
    debug_assert_eq!(log_q.len(), n - 1);
    let ln_n = match form {
        HpsDenominator::ScaledByN => ((n - 1) as f64).ln(),
        HpsDenominator::Plain => 0.0,
    };
    let mut terms = Vec::with_capacity(n);
    terms.push(r[0]);
    for (i, &lq) in log_q.iter().enumerate() {
        terms.push(ln_n + lq + r[i + 1]);
    }
    let lse = logsumexp(&terms);
    let mut coefs: Vec<f64> = terms.iter().map(|&t| (t - lse).exp()).collect();
    coefs[0] -= 1.0;
    (lse - r[0], coefs)
}

/// Plackett-Luce negative log-likelihood of the observed ranking:
/// Σ_j −log(e^{r_j} / Σ_{k≥j} e^{r_k}). The last stage is identically zero
/// and skipped.
pub fn pl_loss_into(sample: &PreferenceSample, ev: &mut Evaluator, mut grad: Option<&mut [f64]>) -> Result<f64> {
    guard(sample, 2)?;
    let n = sample.n();
    let r: Vec<f64> = sample
        .ranked_responses
        .iter()
        .map(|&y| ev.reward(sample.prompt_id, y))
        .collect();
    let mut value = 0.0;
    let mut coefs = vec![0.0; n];
    for j in 0..n - 1 {
        let lse = logsumexp(&r[j..]);
        value += lse - r[j];
        for k in j..n {
            coefs[k] += (r[k] - lse).exp();
        }
        coefs[j] -= 1.0;
    }
    if let Some(out) = grad.as_deref_mut() {
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &sample.ranked_responses, &coefs, out);
    }
    Ok(value)
}

/// Bradley-Terry loss on the extreme pair: −log σ(r(y_τ(1)) − r(y_τ(n))).
pub fn bt_loss_into(sample: &PreferenceSample, ev: &mut Evaluator, grad: Option<&mut [f64]>) -> Result<f64> {
    guard(sample, 2)?;
    let top = sample.ranked_responses[0];
    let bottom = sample.ranked_responses[sample.n() - 1];
    let r_top = ev.reward(sample.prompt_id, top);
    let r_bottom = ev.reward(sample.prompt_id, bottom);
    let value = softplus(r_bottom - r_top);
    if let Some(out) = grad {
        let s = sigmoid(r_bottom - r_top);
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &[top, bottom], &[-s, s], out);
    }
    Ok(value)
}

/// Exact HPS loss over all n responses.
pub fn hps_exact_loss_into(
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    gamma: f64,
    form: HpsDenominator,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    guard(sample, 2)?;
    let r: Vec<f64> = sample
        .ranked_responses
        .iter()
        .map(|&y| ev.reward(sample.prompt_id, y))
        .collect();
    let log_q = log_hard_weights(&sample.est_rewards[1..], gamma);
    let (value, coefs) = hps_core(&r, &log_q, form);
    if let Some(out) = grad {
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &sample.ranked_responses, &coefs, out);
    }
    Ok(value)
}

/// Single-sample HPS: draw one dispreferred response i* ~ q and evaluate
/// −log(e^{r₁} / (e^{r₁} + N·e^{r_{i*}})). Touches exactly two rewards.
///
/// Returns the loss and the drawn ranked position i* ∈ 1..n.
pub fn hps_sampled_loss_into<R: Rng>(
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    gamma: f64,
    form: HpsDenominator,
    rng: &mut R,
    grad: Option<&mut [f64]>,
) -> Result<(f64, usize)> {
    let q = hard_sampling_distribution(sample, gamma)?;
    let mut u = rng.random::<f64>();
    let mut pick = q.weights.len() - 1;
    for (i, &w) in q.weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            pick = i;
            break;
        }
    }
    let position = pick + 1;
    let ln_n = match form {
        HpsDenominator::ScaledByN => ((sample.n() - 1) as f64).ln(),
        HpsDenominator::Plain => 0.0,
    };
    let top = sample.ranked_responses[0];
    let hard = sample.ranked_responses[position];
    let r_top = ev.reward(sample.prompt_id, top);
    let r_hard = ev.reward(sample.prompt_id, hard);
    let z = ln_n + r_hard - r_top;
    let value = softplus(z);
    if let Some(out) = grad {
        let s = sigmoid(z);
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &[top, hard], &[-s, s], out);
    }
    Ok((value, position))
}

/// Weighted two-level HPS: L₁ + λ·L₂, where L₁ treats y_τ(1) as preferred
/// against i = 2..n and L₂ treats y_τ(2) as preferred against i = 3..n.
pub fn weighted_hps_loss_into(
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    gamma: f64,
    lambda: f64,
    form: HpsDenominator,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    guard(sample, 2)?;
    let n = sample.n();
    if n < 3 {
        return Err(PrefError::MalformedSample(
            "weighted HPS needs n >= 3 (the second level needs a dispreferred pool)".into(),
        ));
    }
    let r: Vec<f64> = sample
        .ranked_responses
        .iter()
        .map(|&y| ev.reward(sample.prompt_id, y))
        .collect();
    let (l1, c1) = hps_core(&r, &log_hard_weights(&sample.est_rewards[1..], gamma), form);
    let (l2, c2) = hps_core(&r[1..], &log_hard_weights(&sample.est_rewards[2..], gamma), form);
    if let Some(out) = grad {
        let mut coefs = c1;
        for (slot, c) in coefs[1..].iter_mut().zip(c2) {
            *slot += lambda * c;
        }
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &sample.ranked_responses, &coefs, out);
    }
    Ok(l1 + lambda * l2)
}

/// SLiC hinge on raw log-probabilities:
/// max(0, δ − pos + neg − λ·ref). Returns the value and its subgradient
/// w.r.t. (pos, neg, ref); the subgradient at the kink is 0.
pub fn slic_value(pos_logprob: f64, neg_logprob: f64, ref_logprob: f64, delta: f64, lambda: f64) -> (f64, [f64; 3]) {
    let inside = delta - pos_logprob + neg_logprob - lambda * ref_logprob;
    if inside > 0.0 {
        (inside, [-1.0, 1.0, -lambda])
    } else {
        (0.0, [0.0; 3])
    }
}

/// SLiC wired to a ranked sample: pos = y_τ(1), neg = y_τ(n), and the
/// regularized reference sequence defaults to y_τ(1) as well. Needs a policy
/// parameterization (log-probabilities); rejects the linear kind.
pub fn slic_loss_into(
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    delta: f64,
    lambda: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    guard(sample, 2)?;
    let top = sample.ranked_responses[0];
    let bottom = sample.ranked_responses[sample.n() - 1];
    let pos = ev.log_prob(sample.prompt_id, top)?;
    let neg = ev.log_prob(sample.prompt_id, bottom)?;
    let reference = ev.log_prob(sample.prompt_id, top)?;
    let (value, [d_pos, d_neg, d_ref]) = slic_value(pos, neg, reference, delta, lambda);
    if let Some(out) = grad {
        ev.model
            .accumulate_logprob_grad(ev.world, sample.prompt_id, &[top, bottom], &[d_pos + d_ref, d_neg], out)?;
    }
    Ok(value)
}

/// LiPO-λ listwise loss. `psi` are the true relevance scores aligned with
/// the ranked responses; the implicit scores s_i come from the model.
///
/// ```text
/// L = Σ_{ψ_i > ψ_j} Δ_{i,j} · log(1 + e^{−(s_i − s_j)}),
/// Δ_{i,j} = |2^{ψ_i} − 2^{ψ_j}| · |1/log(1+rank(i)) − 1/log(1+rank(j))|,
/// ```
///
/// where rank(i) is y_i's 1-based position in the ordering induced by s
/// (ties broken by the observed ranking τ). The Δ weights are treated as
/// constants of the gradient, as usual for lambda-style objectives.
pub fn lipo_loss_into(
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    psi: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    guard(sample, 2)?;
    let n = sample.n();
    if psi.len() != n {
        return Err(PrefError::DimMismatch {
            expected: n,
            got: psi.len(),
        });
    }
    let s: Vec<f64> = sample
        .ranked_responses
        .iter()
        .map(|&y| ev.reward(sample.prompt_id, y))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    let discount = |i: usize| 1.0 / (1.0 + rank[i] as f64).ln();
    let mut value = 0.0;
    let mut coefs = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if psi[i] > psi[j] {
                let delta = (2f64.powf(psi[i]) - 2f64.powf(psi[j])).abs() * (discount(i) - discount(j)).abs();
                value += delta * softplus(s[j] - s[i]);
                let sg = delta * sigmoid(s[j] - s[i]);
                coefs[i] -= sg;
                coefs[j] += sg;
            }
        }
    }
    if let Some(out) = grad {
        ev.model
            .accumulate_reward_grad(ev.world, sample.prompt_id, &sample.ranked_responses, &coefs, out);
    }
    Ok(value)
}

/// Evaluates any loss kind, accumulating the gradient when asked.
///
/// `rng` feeds the sampled HPS draw; `psi` for LiPO defaults to the sample's
/// estimated rewards. Returns the value plus the sampled position, if any.
pub fn sample_loss_into<R: Rng>(
    kind: &LossKind,
    sample: &PreferenceSample,
    ev: &mut Evaluator,
    gamma: f64,
    form: HpsDenominator,
    rng: &mut R,
    grad: Option<&mut [f64]>,
) -> Result<(f64, Option<usize>)> {
    match kind {
        LossKind::Pl => Ok((pl_loss_into(sample, ev, grad)?, None)),
        LossKind::Bt => Ok((bt_loss_into(sample, ev, grad)?, None)),
        LossKind::HpsExact => Ok((hps_exact_loss_into(sample, ev, gamma, form, grad)?, None)),
        LossKind::HpsSampled => {
            let (v, pos) = hps_sampled_loss_into(sample, ev, gamma, form, rng, grad)?;
            Ok((v, Some(pos)))
        }
        LossKind::WeightedHps { lambda } => Ok((weighted_hps_loss_into(sample, ev, gamma, *lambda, form, grad)?, None)),
        LossKind::Slic { delta, lambda } => Ok((slic_loss_into(sample, ev, *delta, *lambda, grad)?, None)),
        LossKind::Lipo => Ok((lipo_loss_into(sample, ev, &sample.est_rewards, grad)?, None)),
    }
}

fn dense(model: &RewardModel) -> Vec<f64> {
    vec![0.0; model.params().len()]
}

/// Convenience wrappers returning a dense [`LossValue`].
pub fn pl_loss(sample: &PreferenceSample, model: &RewardModel, world: &World) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let value = pl_loss_into(sample, &mut ev, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux::default(),
    })
}

pub fn bt_loss(sample: &PreferenceSample, model: &RewardModel, world: &World) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let value = bt_loss_into(sample, &mut ev, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux::default(),
    })
}

pub fn hps_exact_loss(sample: &PreferenceSample, model: &RewardModel, world: &World, gamma: f64) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let value = hps_exact_loss_into(sample, &mut ev, gamma, HpsDenominator::ScaledByN, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux::default(),
    })
}

pub fn hps_sampled_loss<R: Rng>(
    sample: &PreferenceSample,
    model: &RewardModel,
    world: &World,
    gamma: f64,
    rng: &mut R,
) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let (value, position) = hps_sampled_loss_into(sample, &mut ev, gamma, HpsDenominator::ScaledByN, rng, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux {
            sampled_position: Some(position),
            terms: None,
        },
    })
}

pub fn weighted_hps_loss(
    sample: &PreferenceSample,
    model: &RewardModel,
    world: &World,
    gamma: f64,
    lambda: f64,
) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let value = weighted_hps_loss_into(sample, &mut ev, gamma, lambda, HpsDenominator::ScaledByN, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux::default(),
    })
}

pub fn lipo_loss(sample: &PreferenceSample, model: &RewardModel, world: &World, psi: &[f64]) -> Result<LossValue> {
    let mut gradient = dense(model);
    let mut ev = Evaluator::new(model, world);
    let value = lipo_loss_into(sample, &mut ev, psi, Some(&mut gradient))?;
    Ok(LossValue {
        value,
        gradient,
        aux: LossAux::default(),
    })
}

/// Reward-only HPS evaluation for instance studies (no model in the loop):
/// `r[0]` is the preferred reward, `r[1..]` the dispreferred rewards, with
/// estimated rewards for the hardness weights given separately.
pub fn hps_value_from_rewards(r: &[f64], est_dispreferred: &[f64], gamma: f64, form: HpsDenominator) -> f64 {
    let log_q = log_hard_weights(est_dispreferred, gamma);
    hps_core(r, &log_q, form).0
}

/// The γ → ∞ limiting loss: all hardness mass on the largest dispreferred
/// reward.
pub fn hps_limit_value_from_rewards(r: &[f64], form: HpsDenominator) -> f64 {
    let ln_n = match form {
        HpsDenominator::ScaledByN => ((r.len() - 1) as f64).ln(),
        HpsDenominator::Plain => 0.0,
    };
    let max_dis = r[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    softplus(ln_n + max_dis - r[0])
}

/// Compares the analytic gradient of `kind` against central finite
/// differences (step `h`) at the model's current parameters, returning the
/// largest elementwise relative error. The sampled HPS draw is replayed from
/// `seed` so both sides see the same index.
pub fn loss_gradient_check(
    kind: &LossKind,
    sample: &PreferenceSample,
    model: &RewardModel,
    world: &World,
    gamma: f64,
    form: HpsDenominator,
    seed: u64,
    h: f64,
) -> Result<f64> {
    let mut analytic = dense(model);
    let mut ev = Evaluator::new(model, world);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_loss_into(kind, sample, &mut ev, gamma, form, &mut rng, Some(&mut analytic))?;

    let mut probe = model.clone();
    let fd = finite_diff_grad(
        |params| {
            probe.params_mut().copy_from_slice(params);
            let mut ev = Evaluator::new(&probe, world);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_loss_into(kind, sample, &mut ev, gamma, form, &mut rng, None)
                .map(|(v, _)| v)
                .expect("loss evaluation during finite differencing")
        },
        model.params(),
        h,
    );
    Ok(max_rel_err(&analytic, &fd))
}
