//! Fine-tune comparison: train the policy-parameterized reward (dpo_implicit)
//! with each loss kind under an identical data and step budget, then score
//! held-out samples. The direction under test: HPS training buys reward
//! margin without giving up ranking accuracy.
//!
//! Defaults matter here. Full-pool rankings (n = pool size) leave no response
//! untouched by the loss, a wide θ*-ball keeps the sampled rankings close to
//! deterministic, and the γ ramp lets the hardness weights anneal from
//! uniform to hardest-negative — a constant high γ degenerates HPS into a
//! top-pair-only objective and loses the margin advantage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{annotate_rewards, generate_dataset, AnnotateMode};
use crate::error::{PrefError, Result};
use crate::jsonio::{self, tsv_float};
use crate::loss::{HpsDenominator, LossKind};
use crate::metrics::compute_report;
use crate::reward::RewardModel;
use crate::train::{train, GammaSchedule, OptimizerKind, TrainConfig};
use crate::world::{build_world, derive_seed, WorldConfig};

use super::{check_seeds, load_rows, parse_field, sign_test_p, write_config_lock, Assertion, RowRecord, SweepResult};

/// Significance level for the paired sign test on per-seed margin wins, and
/// the allowed argmax-accuracy giveback.
pub const SIGN_TEST_ALPHA: f64 = 0.05;
pub const ACCURACY_GAP_TOL: f64 = 0.02;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareConfig {
    pub world: WorldConfig,
    pub n: usize,
    pub m_train: usize,
    pub m_eval: usize,
    pub seeds: Vec<u64>,
    pub losses: Vec<LossKind>,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: GammaSchedule,
    #[serde(default)]
    pub hps_form: HpsDenominator,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::new(12, 8, 8, 10.0),
            n: 8,
            m_train: 256,
            m_eval: 512,
            seeds: (0..20).collect(),
            losses: vec![LossKind::Pl, LossKind::Bt, LossKind::HpsExact, LossKind::HpsSampled],
            beta: 0.1,
            learning_rate: 0.5,
            epochs: 400,
            batch_size: 256,
            gamma: GammaSchedule::LinearSteps {
                start: -5.0,
                end: 5.0,
                num_levels: 5,
            },
            hps_form: HpsDenominator::default(),
        }
    }
}

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        if self.losses.is_empty() {
            return Err(PrefError::InvalidConfig("losses must be nonempty".into()));
        }
        let mut names: Vec<&str> = self.losses.iter().map(|l| l.name()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.losses.len() {
            return Err(PrefError::InvalidConfig("loss kinds must be distinct".into()));
        }
        if self.m_train == 0 || self.m_eval == 0 {
            return Err(PrefError::InvalidConfig("m_train and m_eval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub seed: u64,
    pub loss: String,
    pub hps_margin_mean: f64,
    pub argmax_accuracy: f64,
    pub rm_dpo_mean: f64,
    pub rm_rdpo_mean: f64,
    pub reward_eval_count: u64,
    pub wall_ms: f64,
    pub config_hash: String,
}

impl RowRecord for CompareRow {
    const HEADER: &'static [&'static str] = &[
        "seed",
        "loss",
        "hps_margin_mean",
        "argmax_accuracy",
        "rm_dpo_mean",
        "rm_rdpo_mean",
        "reward_eval_count",
        "wall_ms",
        "config_hash",
    ];

    fn tsv(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.loss.clone(),
            tsv_float(self.hps_margin_mean),
            tsv_float(self.argmax_accuracy),
            tsv_float(self.rm_dpo_mean),
            tsv_float(self.rm_rdpo_mean),
            self.reward_eval_count.to_string(),
            tsv_float(self.wall_ms),
            self.config_hash.clone(),
        ]
    }

    fn from_tsv(fields: &[&str]) -> Result<Self> {
        Ok(Self {
            seed: parse_field(fields, 0)?,
            loss: fields
                .get(1)
                .map(|s| s.to_string())
                .ok_or_else(|| PrefError::InvalidConfig("missing loss field".into()))?,
            hps_margin_mean: parse_field(fields, 2)?,
            argmax_accuracy: parse_field(fields, 3)?,
            rm_dpo_mean: parse_field(fields, 4)?,
            rm_rdpo_mean: parse_field(fields, 5)?,
            reward_eval_count: parse_field(fields, 6)?,
            wall_ms: parse_field(fields, 7)?,
            config_hash: fields
                .get(8)
                .map(|s| s.to_string())
                .ok_or_else(|| PrefError::InvalidConfig("missing config_hash field".into()))?,
        })
    }

    fn key(&self) -> String {
        format!("s{}-{}", self.seed, self.loss)
    }
}

/// Trains every requested loss on one seed's world and datasets.
fn run_seed(cfg: &CompareConfig, hash: &str, seed: u64, wanted: &[&LossKind]) -> Result<Vec<CompareRow>> {
    let world = build_world(&cfg.world, derive_seed(seed, "compare-world"))?;
    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "compare-train"));
    let mut train_set = generate_dataset(&world, cfg.m_train, cfg.n, &mut train_rng)?;
    annotate_rewards(&mut train_set, &world, AnnotateMode::GroundTruth, derive_seed(seed, "annotate-train"))?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "compare-eval"));
    let mut eval_set = generate_dataset(&world, cfg.m_eval, cfg.n, &mut eval_rng)?;
    annotate_rewards(&mut eval_set, &world, AnnotateMode::GroundTruth, derive_seed(seed, "annotate-eval"))?;

    // The policy starts at the reference (reward ≡ 0), the natural shared
    // init for every loss.
    let init = RewardModel::DpoImplicit {
        logits: world.ref_logits.clone(),
        beta: cfg.beta,
    };

    let mut out = Vec::new();
    for loss in wanted {
        let mut tc = TrainConfig::new(
            (*loss).clone(),
            OptimizerKind::Sgd,
            cfg.learning_rate,
            cfg.epochs,
            cfg.batch_size,
            derive_seed(seed, "compare-sgd"),
        );
        tc.gamma = cfg.gamma.clone();
        tc.hps_form = cfg.hps_form;
        let record = train(&train_set, &world, &init, &tc)?;
        let report = compute_report(&record.final_params, &world, &eval_set)?;
        out.push(CompareRow {
            seed,
            loss: loss.name().to_string(),
            hps_margin_mean: report.hps_margin_mean,
            argmax_accuracy: report.argmax_accuracy,
            rm_dpo_mean: report.rm_dpo_mean,
            rm_rdpo_mean: report.rm_rdpo_mean,
            reward_eval_count: record.reward_eval_count,
            wall_ms: record.wall_time_ms,
            config_hash: hash.to_string(),
        });
    }
    Ok(out)
}

pub fn run(cfg: &CompareConfig, out_dir: &std::path::Path) -> Result<SweepResult<CompareRow>> {
    cfg.validate()?;
    let hash = jsonio::value_hash(cfg);
    write_config_lock(out_dir, cfg, &hash)?;

    let rows_path = out_dir.join("rows.tsv");
    let mut rows: Vec<CompareRow> = load_rows(&rows_path)?;
    rows.retain(|r| r.config_hash == hash);
    let done: std::collections::HashSet<String> = rows.iter().map(RowRecord::key).collect();

    let jobs: Vec<(u64, Vec<&LossKind>)> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let wanted: Vec<&LossKind> = cfg
                .losses
                .iter()
                .filter(|l| !done.contains(&format!("s{seed}-{}", l.name())))
                .collect();
            (seed, wanted)
        })
        .filter(|(_, wanted)| !wanted.is_empty())
        .collect();
    let fresh: Result<Vec<Vec<CompareRow>>> = jobs.par_iter().map(|(seed, wanted)| run_seed(cfg, &hash, *seed, wanted)).collect();
    rows.extend(fresh?.into_iter().flatten());
    rows.sort_by(|a, b| (a.seed, &a.loss).cmp(&(b.seed, &b.loss)));

    let by = |loss: &str, seed: u64| rows.iter().find(|r| r.loss == loss && r.seed == seed);
    let mean_of = |loss: &str, f: fn(&CompareRow) -> f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.loss == loss).map(f).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };

    let mut wins = 0usize;
    let mut pairs = 0usize;
    for &seed in &cfg.seeds {
        if let (Some(h), Some(p)) = (by("hps_exact", seed), by("pl", seed)) {
            pairs += 1;
            if h.hps_margin_mean > p.hps_margin_mean {
                wins += 1;
            }
        }
    }
    let p_value = if pairs > 0 { sign_test_p(wins, pairs) } else { 1.0 };
    let margin_hps = mean_of("hps_exact", |r| r.hps_margin_mean);
    let margin_pl = mean_of("pl", |r| r.hps_margin_mean);
    let acc_gap = (mean_of("hps_exact", |r| r.argmax_accuracy) - mean_of("pl", |r| r.argmax_accuracy)).abs();

    let assertions = vec![
        Assertion::new(
            "hps_margin_beats_pl",
            margin_hps > margin_pl && p_value < SIGN_TEST_ALPHA,
            format!("mean margin {margin_hps:.4} vs {margin_pl:.4}, {wins}/{pairs} seed wins, sign test p={p_value:.4}"),
        ),
        Assertion::new(
            "argmax_accuracy_within_tolerance",
            acc_gap <= ACCURACY_GAP_TOL,
            format!("|accuracy gap| {acc_gap:.4} <= {ACCURACY_GAP_TOL}"),
        ),
    ];

    let per_loss: Vec<serde_json::Value> = {
        let mut names: Vec<String> = cfg.losses.iter().map(|l| l.name().to_string()).collect();
        names.dedup();
        names
            .iter()
            .map(|name| {
                serde_json::json!({
                    "loss": name,
                    "hps_margin_mean": mean_of(name, |r| r.hps_margin_mean),
                    "argmax_accuracy": mean_of(name, |r| r.argmax_accuracy),
                    "rm_dpo_mean": mean_of(name, |r| r.rm_dpo_mean),
                    "rm_rdpo_mean": mean_of(name, |r| r.rm_rdpo_mean),
                })
            })
            .collect()
    };

    let result = SweepResult {
        experiment: "finetune_compare".into(),
        config_hash: hash,
        rows,
        summary: serde_json::json!({
            "per_loss": per_loss,
            "margin_wins": wins,
            "paired_seeds": pairs,
            "sign_test_p": p_value,
            "accuracy_gap": acc_gap,
        }),
        assertions,
    };
    result.write(out_dir)?;
    Ok(result)
}
