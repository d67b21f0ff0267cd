//! Sweep bookkeeping: deterministic artifacts, resume-from-partial, and
//! stale-row invalidation when the config changes.

use std::fs;
use std::path::Path;

use preflab_core::experiments::gamma::{self, GammaConfig};
use preflab_core::experiments::margin::{self, MarginConfig};
use preflab_core::experiments::ExperimentConfig;

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn gamma_rows_are_reproducible_and_resumable() {
    let cfg = GammaConfig { instances: 40, ..GammaConfig::default() };
    let dir = tempfile::tempdir().unwrap();

    let first = gamma::run(&cfg, dir.path()).unwrap();
    assert!(first.passed(), "small gamma sweep should satisfy its own check");
    let rows = read(dir.path(), "rows.tsv");

    // A rerun over a complete table recomputes nothing and rewrites the
    // same bytes.
    let second = gamma::run(&cfg, dir.path()).unwrap();
    assert_eq!(second.rows.len(), first.rows.len());
    assert_eq!(read(dir.path(), "rows.tsv"), rows);

    // Truncate the table to a partial sweep: the rerun fills in only the
    // missing cells and lands on the identical file again.
    let text = String::from_utf8(rows.clone()).unwrap();
    let keep: Vec<&str> = text.lines().take(1 + first.rows.len() / 2).collect();
    fs::write(dir.path().join("rows.tsv"), keep.join("\n") + "\n").unwrap();
    gamma::run(&cfg, dir.path()).unwrap();
    assert_eq!(read(dir.path(), "rows.tsv"), rows);

    // Deleting it entirely is just the empty-partial case.
    fs::remove_file(dir.path().join("rows.tsv")).unwrap();
    gamma::run(&cfg, dir.path()).unwrap();
    assert_eq!(read(dir.path(), "rows.tsv"), rows);
}

#[test]
fn changing_the_config_invalidates_cached_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GammaConfig { instances: 20, ..GammaConfig::default() };
    let first = gamma::run(&cfg, dir.path()).unwrap();

    let loosened = GammaConfig { min_gap: 0.2, ..cfg.clone() };
    let second = gamma::run(&loosened, dir.path()).unwrap();

    assert_ne!(first.config_hash, second.config_hash);
    assert!(second.rows.iter().all(|r| r.config_hash == second.config_hash));

    let lock: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "config.lock.json")).unwrap();
    assert_eq!(lock["hash"].as_str().unwrap(), second.config_hash);
}

#[test]
fn margin_sweep_resumes_like_gamma() {
    let cfg = MarginConfig {
        k_grid: vec![2, 5],
        b_grid: vec![1.0],
        steps: 4000,
        seeds: vec![1, 2],
    };
    let dir = tempfile::tempdir().unwrap();
    margin::run(&cfg, dir.path()).unwrap();
    let rows = read(dir.path(), "rows.tsv");

    let text = String::from_utf8(rows.clone()).unwrap();
    let keep: Vec<&str> = text.lines().take(2).collect();
    fs::write(dir.path().join("rows.tsv"), keep.join("\n") + "\n").unwrap();
    margin::run(&cfg, dir.path()).unwrap();
    assert_eq!(read(dir.path(), "rows.tsv"), rows);
}

#[test]
fn experiment_selector_round_trips_through_json() {
    let cfg = ExperimentConfig::GammaConvergence(GammaConfig {
        instances: 7,
        ..GammaConfig::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let loaded = ExperimentConfig::from_json_file(&path).unwrap();
    assert_eq!(loaded.name(), "gamma_convergence");
    match loaded {
        ExperimentConfig::GammaConvergence(g) => assert_eq!(g.instances, 7),
        other => panic!("wrong variant: {}", other.name()),
    }

    for name in ["complexity", "gamma", "margin", "efficiency", "compare"] {
        assert!(ExperimentConfig::default_for(name).is_some(), "missing default for {name}");
    }
    assert!(ExperimentConfig::default_for("nope").is_none());
}
