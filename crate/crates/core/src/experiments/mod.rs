//! The verification experiments: sample complexity, γ-convergence, margin
//! maximization, evaluation-count efficiency, and the fine-tune comparison.
//!
//! Every sweep follows the same shape: a serializable config (hashed into
//! `config.lock.json` and stamped onto every row), a `rows.tsv` with one row
//! per (cell, seed) that is parsed back on rerun so finished cells are
//! skipped, a `summary.json` with the aggregates, and a list of pass/fail
//! assertions pinning the quantitative claims.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PrefError, Result};
use crate::jsonio;

pub mod compare;
pub mod complexity;
pub mod efficiency;
pub mod gamma;
pub mod margin;

/// One checked claim of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// A sweep row that can live in `rows.tsv` and be read back for resume.
pub trait RowRecord: Sized {
    const HEADER: &'static [&'static str];
    fn tsv(&self) -> Vec<String>;
    fn from_tsv(fields: &[&str]) -> Result<Self>;
    /// Identity of the (cell, seed) the row answers for; reruns skip keys
    /// that already exist.
    fn key(&self) -> String;
}

pub(crate) fn parse_field<T: std::str::FromStr>(fields: &[&str], idx: usize) -> Result<T> {
    fields
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PrefError::InvalidConfig(format!("unparseable sweep row field {idx}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult<R> {
    pub experiment: String,
    pub config_hash: String,
    pub rows: Vec<R>,
    pub summary: serde_json::Value,
    pub assertions: Vec<Assertion>,
}

impl<R: RowRecord + Serialize> SweepResult<R> {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Writes `rows.tsv` and `summary.json` under `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let rows: Vec<Vec<String>> = self.rows.iter().map(RowRecord::tsv).collect();
        jsonio::write_tsv(&out_dir.join("rows.tsv"), R::HEADER, &rows)?;
        let summary = serde_json::json!({
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "summary": self.summary,
            "assertions": self.assertions,
        });
        jsonio::write_json(&out_dir.join("summary.json"), &summary)
    }

    pub fn print_assertions(&self) {
        for a in &self.assertions {
            let mark = if a.passed { "PASS" } else { "FAIL" };
            println!("[{mark}] {}: {}", a.name, a.detail);
        }
    }
}

/// Reads rows back from a previous run's `rows.tsv`, if present. A header
/// mismatch (schema drift) discards the old rows rather than mixing schemas.
pub fn load_rows<R: RowRecord>(path: &Path) -> Result<Vec<R>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.split('\t').eq(R::HEADER.iter().copied()) => {}
        _ => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        rows.push(R::from_tsv(&fields)?);
    }
    Ok(rows)
}

/// Splits jobs into already-answered and still-missing against prior rows.
pub fn missing_jobs<'a, J>(jobs: &'a [J], done: &HashSet<String>, key_of: impl Fn(&J) -> String + 'a) -> Vec<&'a J> {
    jobs.iter().filter(|j| !done.contains(&key_of(j))).collect()
}

/// Writes `config.lock.json`: the resolved config plus its hash.
pub fn write_config_lock<C: Serialize>(out_dir: &Path, config: &C, hash: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let lock = serde_json::json!({ "config": config, "hash": hash });
    jsonio::write_json(&out_dir.join("config.lock.json"), &lock)
}

/// One-sided exact binomial sign test: P(X ≥ wins) for X ~ Binomial(trials, 1/2).
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    assert!(wins <= trials && trials > 0, "sign test needs 0 <= wins <= trials");
    // Accumulate C(trials, k) / 2^trials from the top; trials are small
    // (tens of seeds), so direct f64 recurrence is exact enough.
    let mut coef = 1.0f64; // C(trials, trials)
    let mut total = 0.0;
    for k in (wins..=trials).rev() {
        total += coef;
        // C(n, k-1) = C(n, k) * k / (n - k + 1)
        coef *= k as f64 / (trials - k + 1) as f64;
    }
    total * 0.5f64.powi(trials as i32)
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Top-level experiment selector; the tag names double as CLI subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Complexity(complexity::ComplexityConfig),
    GammaConvergence(gamma::GammaConfig),
    MarginVerify(margin::MarginConfig),
    Efficiency(efficiency::EfficiencyConfig),
    FinetuneCompare(compare::CompareConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Complexity(_) => "complexity",
            ExperimentConfig::GammaConvergence(_) => "gamma_convergence",
            ExperimentConfig::MarginVerify(_) => "margin_verify",
            ExperimentConfig::Efficiency(_) => "efficiency",
            ExperimentConfig::FinetuneCompare(_) => "finetune_compare",
        }
    }

    /// Shifts every seed in the config by `offset` (the CLI `--seed` knob).
    pub fn reseed(&mut self, offset: u64) {
        match self {
            ExperimentConfig::Complexity(c) => {
                c.world_seed = c.world_seed.wrapping_add(offset);
                for s in &mut c.seeds {
                    *s = s.wrapping_add(offset);
                }
            }
            ExperimentConfig::GammaConvergence(c) => c.seed = c.seed.wrapping_add(offset),
            ExperimentConfig::MarginVerify(c) => {
                for s in &mut c.seeds {
                    *s = s.wrapping_add(offset);
                }
            }
            ExperimentConfig::Efficiency(c) => {
                c.world_seed = c.world_seed.wrapping_add(offset);
                for s in &mut c.seeds {
                    *s = s.wrapping_add(offset);
                }
            }
            ExperimentConfig::FinetuneCompare(c) => {
                for s in &mut c.seeds {
                    *s = s.wrapping_add(offset);
                }
            }
        }
    }

    /// Runs the sweep, writing all artifacts under `out_dir`. Returns
    /// whether every assertion passed.
    pub fn run(&self, out_dir: &Path) -> Result<bool> {
        match self {
            ExperimentConfig::Complexity(c) => {
                let res = complexity::run(c, out_dir)?;
                res.print_assertions();
                Ok(res.passed())
            }
            ExperimentConfig::GammaConvergence(c) => {
                let res = gamma::run(c, out_dir)?;
                res.print_assertions();
                Ok(res.passed())
            }
            ExperimentConfig::MarginVerify(c) => {
                let res = margin::run(c, out_dir)?;
                res.print_assertions();
                Ok(res.passed())
            }
            ExperimentConfig::Efficiency(c) => {
                let res = efficiency::run(c, out_dir)?;
                res.print_assertions();
                Ok(res.passed())
            }
            ExperimentConfig::FinetuneCompare(c) => {
                let res = compare::run(c, out_dir)?;
                res.print_assertions();
                Ok(res.passed())
            }
        }
    }

    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "complexity" => ExperimentConfig::Complexity(Default::default()),
            "gamma" | "gamma_convergence" => ExperimentConfig::GammaConvergence(Default::default()),
            "margin" | "margin_verify" => ExperimentConfig::MarginVerify(Default::default()),
            "efficiency" => ExperimentConfig::Efficiency(Default::default()),
            "compare" | "finetune_compare" => ExperimentConfig::FinetuneCompare(Default::default()),
            _ => return None,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        jsonio::read_json(path)
    }
}

/// Distinct-seeds guard shared by the sweep configs.
pub(crate) fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(PrefError::InvalidConfig("seed list is empty".into()));
    }
    let uniq: HashSet<_> = seeds.iter().collect();
    if uniq.len() != seeds.len() {
        return Err(PrefError::InvalidConfig("seeds must be distinct".into()));
    }
    Ok(())
}
