//! End-to-end runs of the `preflab` binary: the world → data → train → eval
//! pipeline, sweep exit codes, and the seed override.

use std::path::Path;
use std::process::{Command, Output};

fn preflab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_preflab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn preflab")
}

fn write_json(dir: &Path, name: &str, value: serde_json::Value) {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = preflab(dir, &["world", "gen", "--seed", "7", "--out", "w"]);
    assert_eq!(code(&out), 0, "world gen: {}", stderr(&out));
    assert!(dir.join("w/world.json").exists());

    write_json(
        dir,
        "datagen.json",
        serde_json::json!({"world": "w/world.json", "samples": 64, "ranking_len": 4, "seed": 5}),
    );
    let out = preflab(dir, &["data", "gen", "--config", "datagen.json", "--out", "d"]);
    assert_eq!(code(&out), 0, "data gen: {}", stderr(&out));

    write_json(
        dir,
        "annotate.json",
        serde_json::json!({
            "world": "w/world.json", "dataset": "d/dataset.json",
            "mode": "noisy", "sigma": 0.2, "seed": 9
        }),
    );
    let out = preflab(dir, &["data", "annotate", "--config", "annotate.json", "--out", "da"]);
    assert_eq!(code(&out), 0, "annotate: {}", stderr(&out));

    write_json(
        dir,
        "train.json",
        serde_json::json!({
            "world": "w/world.json", "dataset": "da/dataset.json",
            "model": "dpo_implicit", "beta": 0.5,
            "train": {
                "loss": "bt", "optimizer": {"kind": "sgd"},
                "learning_rate": 0.2, "epochs": 3, "batch_size": 16, "seed": 11
            }
        }),
    );
    let out = preflab(dir, &["train", "--config", "train.json", "--out", "t"]);
    assert_eq!(code(&out), 0, "train: {}", stderr(&out));
    // 64 samples / batch 16 = 4 steps per epoch, 3 epochs, plus the header.
    let trace = std::fs::read_to_string(dir.join("t/trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 13);

    write_json(
        dir,
        "eval.json",
        serde_json::json!({"world": "w/world.json", "dataset": "da/dataset.json", "model": "t/model.json"}),
    );
    let out = preflab(dir, &["eval", "--config", "eval.json", "--out", "e", "--format", "json"]);
    assert_eq!(code(&out), 0, "eval: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("e/metrics.json")).unwrap()).unwrap();
    for field in ["rm_dpo_mean", "rm_rdpo_mean", "hps_margin_mean", "argmax_accuracy"] {
        assert!(report[field].is_number(), "missing {field} in metrics.json");
    }
    assert!(dir.join("e/per_sample.tsv").exists());
    // --format json puts the same report on stdout.
    let on_stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(on_stdout["rm_dpo_mean"], report["rm_dpo_mean"]);
}

#[test]
fn sweep_exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    write_json(
        dir,
        "gamma_ok.json",
        serde_json::json!({
            "experiment": "gamma_convergence", "instances": 30, "n_range": [3, 6],
            "min_gap": 0.1, "gamma_grid": [0.0, 5.0, 50.0], "seed": 11
        }),
    );
    let out = preflab(dir, &["sweep", "gamma", "--config", "gamma_ok.json", "--out", "ok", "--threads", "2"]);
    assert_eq!(code(&out), 0, "passing sweep: {}", stderr(&out));
    for artifact in ["rows.tsv", "summary.json", "config.lock.json"] {
        assert!(dir.join("ok").join(artifact).exists(), "missing {artifact}");
    }

    // A grid that stops at γ = 0 cannot reach the limit: assertions fail.
    write_json(
        dir,
        "gamma_bad.json",
        serde_json::json!({
            "experiment": "gamma_convergence", "instances": 10, "n_range": [3, 6],
            "min_gap": 0.1, "gamma_grid": [0.0], "seed": 11
        }),
    );
    let out = preflab(dir, &["sweep", "gamma", "--config", "gamma_bad.json", "--out", "bad"]);
    assert_eq!(code(&out), 2);

    // Config/subcommand mismatch is an error, not an assertion failure.
    let out = preflab(dir, &["sweep", "margin", "--config", "gamma_ok.json", "--out", "x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gamma_convergence"));
}

#[test]
fn seed_flag_shifts_sweep_seeds_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_json(
        dir,
        "gamma.json",
        serde_json::json!({
            "experiment": "gamma_convergence", "instances": 10, "n_range": [3, 6],
            "min_gap": 0.1, "gamma_grid": [0.0, 50.0], "seed": 11
        }),
    );
    for (out_dir, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = preflab(dir, &["sweep", "gamma", "--config", "gamma.json", "--seed", seed, "--out", out_dir]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let rows = |d: &str| std::fs::read(dir.join(d).join("rows.tsv")).unwrap();
    assert_eq!(rows("a"), rows("b"), "same seed must reproduce identical rows");
    assert_ne!(rows("a"), rows("c"), "different seeds must change the draws");
}

#[test]
fn bad_invocations_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = preflab(dir, &["train", "--out", "t"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--config"));

    let out = preflab(dir, &["eval", "--config", "missing.json", "--out", "e"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.json"));

    let out = preflab(dir, &["no-such-command"]);
    assert_eq!(code(&out), 1);

    let out = preflab(dir, &["--help"]);
    assert_eq!(code(&out), 0);
}
