//! Evaluation quantities: implicit-reward margin metrics, the dataset
//! gradient-difference covariance Σ_D with its seminorm, argmax accuracy,
//! and the aggregate report.

use serde::{Deserialize, Serialize};

use crate::dataset::{PreferenceDataset, PreferenceSample};
use crate::error::{PrefError, Result};
use crate::jsonio;
use crate::numeric::logsumexp;
use crate::reward::{ModelKind, RewardModel};
use crate::world::World;

/// Σ_D = (2 / (m·n·(n−1))) · Σ_i Σ_{j<k} h hᵀ with
/// h = ∇r(x_i, y_τ(j)) − ∇r(x_i, y_τ(k)); for the linear parameterization
/// the gradients are the feature vectors themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaD {
    /// Row-major d×d, symmetric.
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub m: usize,
    pub n: usize,
}

impl SigmaD {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    /// ΔᵀΣΔ, clamped at zero against rounding.
    pub fn quad_form(&self, delta: &[f64]) -> Result<f64> {
        if delta.len() != self.dim {
            return Err(PrefError::DimMismatch {
                expected: self.dim,
                got: delta.len(),
            });
        }
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for j in 0..self.dim {
                row += self.at(i, j) * delta[j];
            }
            acc += delta[i] * row;
        }
        Ok(acc.max(0.0))
    }
}

/// Builds Σ_D from the dataset's feature differences (the constant reward
/// gradients of the linear kind).
pub fn sigma_d(dataset: &PreferenceDataset, world: &World) -> Result<SigmaD> {
    dataset.validate(world)?;
    let d = world.dim();
    let n = dataset.n;
    let m = dataset.len();
    let mut matrix = vec![0.0; d * d];
    let mut h = vec![0.0; d];
    for sample in &dataset.samples {
        for j in 0..n {
            let pj = world.feature(sample.prompt_id, sample.ranked_responses[j]);
            for k in j + 1..n {
                let pk = world.feature(sample.prompt_id, sample.ranked_responses[k]);
                for (hi, (a, b)) in h.iter_mut().zip(pj.iter().zip(pk)) {
                    *hi = a - b;
                }
                for r in 0..d {
                    let hr = h[r];
                    for c in r..d {
                        matrix[r * d + c] += hr * h[c];
                    }
                }
            }
        }
    }
    let scale = 2.0 / (m as f64 * n as f64 * (n as f64 - 1.0));
    for r in 0..d {
        for c in r..d {
            let v = matrix[r * d + c] * scale;
            matrix[r * d + c] = v;
            matrix[c * d + r] = v;
        }
    }
    Ok(SigmaD { matrix, dim: d, m, n })
}

/// Σ_D is only well-defined where ∇r is constant in θ; every other kind is
/// rejected rather than silently evaluated at some parameter point.
pub fn sigma_d_for(kind: ModelKind, dataset: &PreferenceDataset, world: &World) -> Result<SigmaD> {
    if kind != ModelKind::Linear {
        return Err(PrefError::IncompatibleLoss {
            loss: "sigma_d",
            kind: kind.name(),
        });
    }
    sigma_d(dataset, world)
}

/// ‖θ̂ − θ*‖_Σ = sqrt((θ̂−θ*)ᵀ Σ (θ̂−θ*)).
pub fn estimator_error(theta_hat: &[f64], theta_star: &[f64], sigma: &SigmaD) -> Result<f64> {
    if theta_hat.len() != theta_star.len() {
        return Err(PrefError::DimMismatch {
            expected: theta_star.len(),
            got: theta_hat.len(),
        });
    }
    let delta: Vec<f64> = theta_hat.iter().zip(theta_star).map(|(a, b)| a - b).collect();
    Ok(sigma.quad_form(&delta)?.sqrt())
}

fn ref_log_prob(world: &World, prompt: u32, response: u32) -> f64 {
    let row = world.ref_logit_row(prompt);
    row[response as usize] - logsumexp(row)
}

fn policy_log_ratio(model: &RewardModel, world: &World, prompt: u32, response: u32) -> Result<f64> {
    Ok(model.log_prob(world, prompt, response)? - ref_log_prob(world, prompt, response))
}

/// Implicit-reward margin of the top pair:
/// log(π_θ(y_τ(1))/π_ref(y_τ(1))) − log(π_θ(y_τ(2))/π_ref(y_τ(2))).
/// Needs a policy parameterization (the linear kind has no logits).
pub fn rm_dpo(model: &RewardModel, world: &World, sample: &PreferenceSample) -> Result<f64> {
    if sample.n() < 2 {
        return Err(PrefError::MalformedSample("rm_dpo needs at least two responses".into()));
    }
    let top = policy_log_ratio(model, world, sample.prompt_id, sample.ranked_responses[0])?;
    let second = policy_log_ratio(model, world, sample.prompt_id, sample.ranked_responses[1])?;
    Ok(top - second)
}

/// Length-regularized variant: rm_dpo − 0.01·(|y_τ(1)| − |y_τ(2)|). The
/// 0.01 coefficient is fixed, not configurable.
pub fn rm_rdpo(model: &RewardModel, world: &World, sample: &PreferenceSample) -> Result<f64> {
    if sample.lengths.len() < 2 {
        return Err(PrefError::MalformedSample("rm_rdpo needs the response lengths".into()));
    }
    let base = rm_dpo(model, world, sample)?;
    Ok(base - 0.01 * (sample.lengths[0] as f64 - sample.lengths[1] as f64))
}

/// Margin against the hardest dispreferred response under the model:
/// r_θ(y_τ(1)) − max_{j≥2} r_θ(y_τ(j)).
pub fn hps_margin(model: &RewardModel, world: &World, sample: &PreferenceSample) -> Result<f64> {
    if sample.n() < 2 {
        return Err(PrefError::MalformedSample("hps_margin needs at least two responses".into()));
    }
    let top = model.reward(world, sample.prompt_id, sample.ranked_responses[0]);
    let hardest = sample.ranked_responses[1..]
        .iter()
        .map(|&y| model.reward(world, sample.prompt_id, y))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(top - hardest)
}

/// Fraction of samples whose preferred response strictly maximizes the
/// model reward over the sample's responses; ties count as failures, so
/// success on a sample is exactly hps_margin > 0.
pub fn argmax_accuracy(model: &RewardModel, world: &World, dataset: &PreferenceDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(PrefError::InvalidConfig("argmax_accuracy over an empty dataset".into()));
    }
    let mut hits = 0usize;
    for sample in &dataset.samples {
        if hps_margin(model, world, sample)? > 0.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// The strong-convexity floor constant
/// ζ(N) = 1 / (2 + exp(2α₀ + ln N) + exp(−2α₀)), with N the number of
/// dispreferred responses and α₀ the reward magnitude bound.
pub fn zeta(n_dispreferred: usize, alpha0: f64) -> f64 {
    let n = n_dispreferred as f64;
    1.0 / (2.0 + (2.0 * alpha0 + n.ln()).exp() + (-2.0 * alpha0).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerSampleMetrics {
    pub prompt_id: u32,
    pub rm_dpo: f64,
    pub rm_rdpo: f64,
    pub hps_margin: f64,
    pub top_correct: bool,
}

/// Dataset-level aggregate of every metric, with the per-sample table kept
/// for the TSV output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub rm_dpo_mean: f64,
    pub rm_rdpo_mean: f64,
    pub hps_margin_mean: f64,
    pub argmax_accuracy: f64,
    pub estimator_error: Option<f64>,
    pub per_sample: Vec<PerSampleMetrics>,
}

/// Evaluates the full report; policy parameterizations only (the RM rows
/// need log-probabilities).
pub fn compute_report(model: &RewardModel, world: &World, dataset: &PreferenceDataset) -> Result<MetricReport> {
    dataset.validate(world)?;
    let mut per_sample = Vec::with_capacity(dataset.len());
    let (mut s_dpo, mut s_rdpo, mut s_margin, mut hits) = (0.0, 0.0, 0.0, 0usize);
    for sample in &dataset.samples {
        let dpo = rm_dpo(model, world, sample)?;
        let rdpo = rm_rdpo(model, world, sample)?;
        let margin = hps_margin(model, world, sample)?;
        let correct = margin > 0.0;
        s_dpo += dpo;
        s_rdpo += rdpo;
        s_margin += margin;
        hits += correct as usize;
        per_sample.push(PerSampleMetrics {
            prompt_id: sample.prompt_id,
            rm_dpo: dpo,
            rm_rdpo: rdpo,
            hps_margin: margin,
            top_correct: correct,
        });
    }
    let m = dataset.len() as f64;
    Ok(MetricReport {
        rm_dpo_mean: s_dpo / m,
        rm_rdpo_mean: s_rdpo / m,
        hps_margin_mean: s_margin / m,
        argmax_accuracy: hits as f64 / m,
        estimator_error: None,
        per_sample,
    })
}

impl MetricReport {
    /// Human-readable aligned summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| out.push_str(&format!("{k:<18} {v}\n"));
        push("rm_dpo_mean", format!("{:+.6}", self.rm_dpo_mean));
        push("rm_rdpo_mean", format!("{:+.6}", self.rm_rdpo_mean));
        push("hps_margin_mean", format!("{:+.6}", self.hps_margin_mean));
        push("argmax_accuracy", format!("{:.6}", self.argmax_accuracy));
        if let Some(e) = self.estimator_error {
            push("estimator_error", format!("{e:.6}"));
        }
        out
    }

    /// Per-sample table as TSV with a header row.
    pub fn write_per_sample_tsv(&self, path: &std::path::Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .per_sample
            .iter()
            .map(|r| {
                vec![
                    r.prompt_id.to_string(),
                    jsonio::tsv_float(r.rm_dpo),
                    jsonio::tsv_float(r.rm_rdpo),
                    jsonio::tsv_float(r.hps_margin),
                    (r.top_correct as u8).to_string(),
                ]
            })
            .collect();
        jsonio::write_tsv(path, &["prompt_id", "rm_dpo", "rm_rdpo", "hps_margin", "top_correct"], &rows)
    }
}
