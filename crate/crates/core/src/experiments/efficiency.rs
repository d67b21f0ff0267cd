//! Evaluation-count and wall-time benchmark: full-ranking PL training costs
//! n reward evaluations per sample per step, single-draw HPS costs 2,
//! independent of n.
//!
//! Cells run strictly sequentially on the current thread — parallel workers
//! would contend for cores and corrupt the wall-time comparison. The count
//! assertions are exact integers; wall time is asserted only as a coarse
//! floor at the largest n.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{annotate_rewards, generate_dataset, AnnotateMode};
use crate::error::{PrefError, Result};
use crate::jsonio::{self, tsv_float};
use crate::loss::LossKind;
use crate::reward::{ModelKind, RewardModel};
use crate::train::{train, GammaSchedule, OptimizerKind, TrainConfig};
use crate::world::{build_world, derive_seed, World, WorldConfig};

use super::{check_seeds, load_rows, parse_field, write_config_lock, Assertion, RowRecord, SweepResult};

/// Measured PL-vs-HPS wall-time ratio floor at the largest n. The exact
/// eval-count ratio there is n/2; the floor is deliberately conservative
/// because fixed per-step overhead is shared by both.
pub const WALL_RATIO_FLOOR: f64 = 8.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyConfig {
    pub world: WorldConfig,
    pub world_seed: u64,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seeds: Vec<u64>,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::new(8, 64, 8, 1.0),
            world_seed: 17,
            n_grid: vec![4, 16, 64],
            m: 256,
            epochs: 200,
            learning_rate: 0.05,
            beta: 0.1,
            gamma: 1.0,
            seeds: vec![0, 1, 2],
        }
    }
}

impl EfficiencyConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        if self.n_grid.is_empty() || self.m == 0 || self.epochs == 0 {
            return Err(PrefError::InvalidConfig("n_grid, m and epochs must be nonempty/positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyRow {
    pub n: usize,
    pub seed: u64,
    pub loss: String,
    pub steps: usize,
    pub samples_per_step: usize,
    pub reward_eval_count: u64,
    pub evals_per_sample_step: f64,
    pub wall_ms_per_step: f64,
    pub config_hash: String,
}

impl RowRecord for EfficiencyRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "seed",
        "loss",
        "steps",
        "samples_per_step",
        "reward_eval_count",
        "evals_per_sample_step",
        "wall_ms_per_step",
        "config_hash",
    ];

    fn tsv(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.seed.to_string(),
            self.loss.clone(),
            self.steps.to_string(),
            self.samples_per_step.to_string(),
            self.reward_eval_count.to_string(),
            tsv_float(self.evals_per_sample_step),
            tsv_float(self.wall_ms_per_step),
            self.config_hash.clone(),
        ]
    }

    fn from_tsv(fields: &[&str]) -> Result<Self> {
        Ok(Self {
            n: parse_field(fields, 0)?,
            seed: parse_field(fields, 1)?,
            loss: fields
                .get(2)
                .map(|s| s.to_string())
                .ok_or_else(|| PrefError::InvalidConfig("missing loss field".into()))?,
            steps: parse_field(fields, 3)?,
            samples_per_step: parse_field(fields, 4)?,
            reward_eval_count: parse_field(fields, 5)?,
            evals_per_sample_step: parse_field(fields, 6)?,
            wall_ms_per_step: parse_field(fields, 7)?,
            config_hash: fields
                .get(8)
                .map(|s| s.to_string())
                .ok_or_else(|| PrefError::InvalidConfig("missing config_hash field".into()))?,
        })
    }

    fn key(&self) -> String {
        format!("n{}-s{}-{}", self.n, self.seed, self.loss)
    }
}

fn run_job(cfg: &EfficiencyConfig, world: &World, hash: &str, n: usize, seed: u64, loss: &LossKind) -> Result<EfficiencyRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("efficiency-n{n}")));
    let mut dataset = generate_dataset(world, cfg.m, n, &mut rng)?;
    annotate_rewards(&mut dataset, world, AnnotateMode::GroundTruth, derive_seed(seed, "annotate"))?;

    let init = RewardModel::zeroed(ModelKind::DpoImplicit, world, cfg.beta)?;
    let mut tc = TrainConfig::new(
        loss.clone(),
        OptimizerKind::Sgd,
        cfg.learning_rate,
        cfg.epochs,
        cfg.m,
        derive_seed(seed, "efficiency-sgd"),
    );
    tc.gamma = GammaSchedule::Constant { gamma: cfg.gamma };
    let record = train(&dataset, world, &init, &tc)?;

    let denom = (record.steps * cfg.m) as f64;
    Ok(EfficiencyRow {
        n,
        seed,
        loss: loss.name().to_string(),
        steps: record.steps,
        samples_per_step: cfg.m,
        reward_eval_count: record.reward_eval_count,
        evals_per_sample_step: record.reward_eval_count as f64 / denom,
        wall_ms_per_step: record.wall_time_ms / record.steps as f64,
        config_hash: hash.to_string(),
    })
}

pub fn run(cfg: &EfficiencyConfig, out_dir: &std::path::Path) -> Result<SweepResult<EfficiencyRow>> {
    cfg.validate()?;
    let hash = jsonio::value_hash(cfg);
    write_config_lock(out_dir, cfg, &hash)?;
    let world = build_world(&cfg.world, cfg.world_seed)?;

    let rows_path = out_dir.join("rows.tsv");
    let mut rows: Vec<EfficiencyRow> = load_rows(&rows_path)?;
    rows.retain(|r| r.config_hash == hash);
    let done: std::collections::HashSet<String> = rows.iter().map(RowRecord::key).collect();

    // Sequential on purpose; see module docs.
    for &n in &cfg.n_grid {
        for &seed in &cfg.seeds {
            for loss in [LossKind::Pl, LossKind::HpsSampled] {
                if !done.contains(&format!("n{n}-s{seed}-{}", loss.name())) {
                    rows.push(run_job(cfg, &world, &hash, n, seed, &loss)?);
                }
            }
        }
    }
    rows.sort_by(|a, b| (a.n, a.seed, &a.loss).cmp(&(b.n, b.seed, &b.loss)));

    let exact = |r: &EfficiencyRow, per_sample: u64| r.reward_eval_count == per_sample * (r.steps * r.samples_per_step) as u64;
    let hps_exact_count = rows.iter().filter(|r| r.loss == "hps_sampled").all(|r| exact(r, 2));
    let pl_exact_count = rows.iter().filter(|r| r.loss == "pl").all(|r| exact(r, r.n as u64));

    let n_max = *cfg.n_grid.iter().max().unwrap();
    let mean_wall = |loss: &str| {
        let w: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n_max && r.loss == loss)
            .map(|r| r.wall_ms_per_step)
            .collect();
        w.iter().sum::<f64>() / w.len().max(1) as f64
    };
    let wall_ratio = mean_wall("pl") / mean_wall("hps_sampled");

    let assertions = vec![
        Assertion::new(
            "hps_sampled_two_evals_per_sample_step",
            hps_exact_count,
            "reward_eval_count == 2·m·steps exactly, all n".into(),
        ),
        Assertion::new(
            "pl_n_evals_per_sample_step",
            pl_exact_count,
            "reward_eval_count == n·m·steps exactly, all n".into(),
        ),
        Assertion::new(
            &format!("wall_ratio_n{n_max}"),
            wall_ratio >= WALL_RATIO_FLOOR,
            format!("pl/hps wall time per step ratio {wall_ratio:.2} >= {WALL_RATIO_FLOOR} (count ratio {})", n_max / 2),
        ),
    ];

    let summary = serde_json::json!({
        "wall_ratio_at_n_max": wall_ratio,
        "n_max": n_max,
        "mean_wall_ms_per_step_pl": mean_wall("pl"),
        "mean_wall_ms_per_step_hps": mean_wall("hps_sampled"),
    });
    let result = SweepResult {
        experiment: "efficiency".into(),
        config_hash: hash,
        rows,
        summary,
        assertions,
    };
    result.write(out_dir)?;
    Ok(result)
}
