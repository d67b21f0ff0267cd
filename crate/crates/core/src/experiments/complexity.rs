//! Sample-complexity sweep: how fast does the Σ_D-norm estimator error of
//! the PL and HPS maximum-likelihood fits shrink with the dataset size m and
//! the ranking length n?
//!
//! Both estimators are fit by full-batch descent on the convex linear-reward
//! objectives, unconstrained: projecting onto the small θ*-ball would clip
//! exactly the noisy small-m fits and flatten the measured decay slope, and
//! the argmin is unique without it.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{annotate_rewards, generate_dataset, AnnotateMode};
use crate::error::Result;
use crate::jsonio::{self, tsv_float};
use crate::loss::{HpsDenominator, LossKind};
use crate::metrics::{estimator_error, sigma_d};
use crate::reward::{ModelKind, RewardModel};
use crate::train::fit_full_batch;
use crate::world::{build_world, derive_seed, World, WorldConfig};

use super::{check_seeds, load_rows, log_log_slope, parse_field, write_config_lock, Assertion, RowRecord, SweepResult};

/// Decay slope window asserted for the n=8 column: −1/2 ± 0.15, wide enough
/// for 20-seed noise, tight enough to exclude slope 0 and slope −1.
pub const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);
/// n=2 is the same Bradley-Terry objective for both losses, so the fitted
/// parameters must agree to numerical noise.
pub const COINCIDENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityConfig {
    pub world: WorldConfig,
    pub world_seed: u64,
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    /// Cells outside the full grid product, as (m, n).
    #[serde(default)]
    pub extra_cells: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub gamma: f64,
    #[serde(default)]
    pub hps_form: HpsDenominator,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::new(50, 100, 8, 0.1),
            world_seed: 7,
            m_grid: vec![250, 1000, 4000],
            n_grid: vec![2, 8],
            extra_cells: vec![(2000, 16)],
            seeds: (0..20).collect(),
            gamma: 1.0,
            hps_form: HpsDenominator::default(),
            max_iters: 50_000,
            grad_tol: 1e-6,
        }
    }
}

impl ComplexityConfig {
    fn cells(&self) -> Vec<(usize, usize)> {
        let mut cells: Vec<(usize, usize)> = Vec::new();
        for &n in &self.n_grid {
            for &m in &self.m_grid {
                cells.push((m, n));
            }
        }
        for &c in &self.extra_cells {
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        if self.m_grid.is_empty() || self.n_grid.is_empty() {
            return Err(crate::error::PrefError::InvalidConfig("m_grid and n_grid must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub pl_err: f64,
    pub hps_err: f64,
    /// ‖θ̂_PL − θ̂_HPS‖₂, the n=2 coincidence witness.
    pub theta_gap: f64,
    pub pl_iters: usize,
    pub hps_iters: usize,
    pub pl_converged: bool,
    pub hps_converged: bool,
    pub wall_ms: f64,
    pub config_hash: String,
}

impl RowRecord for ComplexityRow {
    const HEADER: &'static [&'static str] = &[
        "m",
        "n",
        "seed",
        "pl_err",
        "hps_err",
        "theta_gap",
        "pl_iters",
        "hps_iters",
        "pl_converged",
        "hps_converged",
        "wall_ms",
        "config_hash",
    ];

    fn tsv(&self) -> Vec<String> {
        vec![
            self.m.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
            tsv_float(self.pl_err),
            tsv_float(self.hps_err),
            tsv_float(self.theta_gap),
            self.pl_iters.to_string(),
            self.hps_iters.to_string(),
            self.pl_converged.to_string(),
            self.hps_converged.to_string(),
            tsv_float(self.wall_ms),
            self.config_hash.clone(),
        ]
    }

    fn from_tsv(fields: &[&str]) -> Result<Self> {
        Ok(Self {
            m: parse_field(fields, 0)?,
            n: parse_field(fields, 1)?,
            seed: parse_field(fields, 2)?,
            pl_err: parse_field(fields, 3)?,
            hps_err: parse_field(fields, 4)?,
            theta_gap: parse_field(fields, 5)?,
            pl_iters: parse_field(fields, 6)?,
            hps_iters: parse_field(fields, 7)?,
            pl_converged: parse_field(fields, 8)?,
            hps_converged: parse_field(fields, 9)?,
            wall_ms: parse_field(fields, 10)?,
            config_hash: fields
                .get(11)
                .map(|s| s.to_string())
                .ok_or_else(|| crate::error::PrefError::InvalidConfig("missing config_hash field".into()))?,
        })
    }

    fn key(&self) -> String {
        format!("m{}-n{}-s{}", self.m, self.n, self.seed)
    }
}

/// Fits both estimators on one freshly sampled dataset.
fn run_job(cfg: &ComplexityConfig, world: &World, hash: &str, m: usize, n: usize, seed: u64) -> Result<ComplexityRow> {
    let started = std::time::Instant::now();
    let tag = format!("complexity-m{m}-n{n}");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &tag));
    let mut dataset = generate_dataset(world, m, n, &mut rng)?;
    annotate_rewards(&mut dataset, world, AnnotateMode::GroundTruth, derive_seed(seed, "annotate"))?;

    let sigma = sigma_d(&dataset, world)?;
    let init = RewardModel::zeroed(ModelKind::Linear, world, 1.0)?;
    let (pl_model, pl_stats) = fit_full_batch(
        &dataset,
        world,
        &init,
        &LossKind::Pl,
        cfg.gamma,
        cfg.hps_form,
        None,
        cfg.max_iters,
        cfg.grad_tol,
    )?;
    let (hps_model, hps_stats) = fit_full_batch(
        &dataset,
        world,
        &init,
        &LossKind::HpsExact,
        cfg.gamma,
        cfg.hps_form,
        None,
        cfg.max_iters,
        cfg.grad_tol,
    )?;

    let theta_gap = pl_model
        .params()
        .iter()
        .zip(hps_model.params())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    Ok(ComplexityRow {
        m,
        n,
        seed,
        pl_err: estimator_error(pl_model.params(), &world.theta_star, &sigma)?,
        hps_err: estimator_error(hps_model.params(), &world.theta_star, &sigma)?,
        theta_gap,
        pl_iters: pl_stats.iters,
        hps_iters: hps_stats.iters,
        pl_converged: pl_stats.converged,
        hps_converged: hps_stats.converged,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        config_hash: hash.to_string(),
    })
}

struct CellStats {
    m: usize,
    n: usize,
    pl_mean: f64,
    hps_mean: f64,
    seeds_used: usize,
    excluded: bool,
}

fn cell_stats(rows: &[ComplexityRow], m: usize, n: usize) -> CellStats {
    let converged: Vec<&ComplexityRow> = rows
        .iter()
        .filter(|r| r.m == m && r.n == n && r.pl_converged && r.hps_converged)
        .collect();
    let total = rows.iter().filter(|r| r.m == m && r.n == n).count();
    if converged.len() < total {
        eprintln!(
            "warning: cell (m={m}, n={n}): {} of {total} seeds failed to converge and were excluded",
            total - converged.len()
        );
    }
    let k = converged.len() as f64;
    CellStats {
        m,
        n,
        pl_mean: converged.iter().map(|r| r.pl_err).sum::<f64>() / k,
        hps_mean: converged.iter().map(|r| r.hps_err).sum::<f64>() / k,
        seeds_used: converged.len(),
        excluded: converged.is_empty(),
    }
}

pub fn run(cfg: &ComplexityConfig, out_dir: &std::path::Path) -> Result<SweepResult<ComplexityRow>> {
    cfg.validate()?;
    let hash = jsonio::value_hash(cfg);
    write_config_lock(out_dir, cfg, &hash)?;
    let world = build_world(&cfg.world, cfg.world_seed)?;

    let rows_path = out_dir.join("rows.tsv");
    let mut rows: Vec<ComplexityRow> = load_rows(&rows_path)?;
    rows.retain(|r| r.config_hash == hash);
    let done: std::collections::HashSet<String> = rows.iter().map(RowRecord::key).collect();

    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();
    for (m, n) in cfg.cells() {
        for &seed in &cfg.seeds {
            if !done.contains(&format!("m{m}-n{n}-s{seed}")) {
                jobs.push((m, n, seed));
            }
        }
    }
    let fresh: Result<Vec<ComplexityRow>> = jobs
        .par_iter()
        .map(|&(m, n, seed)| run_job(cfg, &world, &hash, m, n, seed))
        .collect();
    rows.extend(fresh?);
    rows.sort_by_key(|r| (r.m, r.n, r.seed));

    let cells: Vec<CellStats> = cfg.cells().iter().map(|&(m, n)| cell_stats(&rows, m, n)).collect();

    // Decay slopes of log mean-error against log m (per n) and log n (per m),
    // over the full grid only; excluded cells drop out of the fit.
    let slope_vs_m = |n: usize, pick: fn(&CellStats) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.n == n && !c.excluded && cfg.m_grid.contains(&c.m))
            .map(|c| (c.m as f64, pick(c)))
            .collect();
        (pts.len() >= 2).then(|| log_log_slope(&pts))
    };
    let slope_vs_n = |m: usize, pick: fn(&CellStats) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.m == m && !c.excluded && cfg.n_grid.contains(&c.n))
            .map(|c| (c.n as f64, pick(c)))
            .collect();
        (pts.len() >= 2).then(|| log_log_slope(&pts))
    };

    let mut slopes = serde_json::Map::new();
    for &n in &cfg.n_grid {
        slopes.insert(format!("pl_vs_m_n{n}"), slope_vs_m(n, |c| c.pl_mean).into());
        slopes.insert(format!("hps_vs_m_n{n}"), slope_vs_m(n, |c| c.hps_mean).into());
    }
    for &m in &cfg.m_grid {
        slopes.insert(format!("pl_vs_n_m{m}"), slope_vs_n(m, |c| c.pl_mean).into());
        slopes.insert(format!("hps_vs_n_m{m}"), slope_vs_n(m, |c| c.hps_mean).into());
    }

    let mut assertions = Vec::new();
    let slope_n = *cfg.n_grid.iter().max().unwrap();
    for (label, pick) in [("pl", (|c: &CellStats| c.pl_mean) as fn(&CellStats) -> f64), ("hps", |c| c.hps_mean)] {
        let slope = slope_vs_m(slope_n, pick);
        let ok = slope.is_some_and(|s| (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&s));
        assertions.push(Assertion::new(
            &format!("{label}_error_decay_slope_n{slope_n}"),
            ok,
            format!(
                "log err / log m slope {} within [{}, {}]",
                slope.map_or("n/a".into(), |s| format!("{s:.4}")),
                SLOPE_RANGE.0,
                SLOPE_RANGE.1
            ),
        ));
    }

    for &(m, n) in &cfg.extra_cells {
        let stats = cell_stats(&rows, m, n);
        assertions.push(Assertion::new(
            &format!("hps_error_le_pl_m{m}_n{n}"),
            !stats.excluded && stats.hps_mean <= stats.pl_mean,
            format!("mean hps err {:.5} vs pl err {:.5} over {} seeds", stats.hps_mean, stats.pl_mean, stats.seeds_used),
        ));
    }

    if cfg.n_grid.contains(&2) {
        let worst = rows
            .iter()
            .filter(|r| r.n == 2)
            .map(|r| r.theta_gap.max((r.pl_err - r.hps_err).abs()))
            .fold(0.0f64, f64::max);
        assertions.push(Assertion::new(
            "n2_estimators_coincide",
            worst <= COINCIDENCE_TOL,
            format!("max n=2 parameter/error gap {worst:.3e} <= {COINCIDENCE_TOL:.0e}"),
        ));
    }

    let summary = serde_json::json!({
        "cells": cells.iter().map(|c| serde_json::json!({
            "m": c.m, "n": c.n,
            "pl_mean_err": c.pl_mean, "hps_mean_err": c.hps_mean,
            "seeds_used": c.seeds_used, "excluded": c.excluded,
        })).collect::<Vec<_>>(),
        "slopes": slopes,
    });

    let result = SweepResult {
        experiment: "complexity".into(),
        config_hash: hash,
        rows,
        summary,
        assertions,
    };
    result.write(out_dir)?;
    Ok(result)
}
