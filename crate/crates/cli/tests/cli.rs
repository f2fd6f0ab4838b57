use std::fs;
use std::path::{Path, PathBuf};

use mangrove_pipeline::{main_with, GlobalArgs, Resolved};
use serde_json::{json, Value};

fn cli(args: &[&str]) -> i32 {
    main_with(std::iter::once("pipeline").chain(args.iter().copied()))
}

fn write_config(dir: &Path, body: Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body.to_string()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = write_config(dir, json!({ "seed": 1, "pipeline": { "bounds": { "min_lon": 0.0, "max_lon": 2.0, "min_lat": 0.0, "max_lat": 2.0 }, "cell_side": 1.0 } }));
    (cfg, dir.join("out"))
}

#[test]
fn toy_bounds_give_four_cells() {
    let d = tempfile::tempdir().unwrap();
    let (cfg, out) = toy(d.path());
    assert_eq!(cli(&["grid", "--config", s(&cfg), "--out", s(&out)]), 0);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let digest = manifest["stages"]["grid"]["outputs"]["grid.csv"].as_str().unwrap();
    assert_eq!(digest, mangrove_pipeline::digest(grid.as_bytes()));
    // nothing half-written or locked is left behind
    let stray: Vec<_> = fs::read_dir(&out).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().starts_with('.')).collect();
    assert!(stray.is_empty(), "{stray:?}");
}

#[test]
fn configuration_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    assert_eq!(cli(&["grid", "--out", s(&out)]), 2, "missing seed");
    assert_eq!(cli(&["grid", "--seed", "3"]), 2, "missing output directory");
    assert_eq!(cli(&["frobnicate", "--seed", "3", "--out", s(&out)]), 2, "unknown subcommand");
    let bad = write_config(d.path(), json!({ "seed": 1, "colour": "green" }));
    assert_eq!(cli(&["grid", "--config", s(&bad), "--out", s(&out)]), 2, "unknown key");
    let bad = write_config(d.path(), json!({ "seed": 1, "pipeline": { "models": ["mlp"] } }));
    assert_eq!(cli(&["grid", "--config", s(&bad), "--out", s(&out)]), 2, "unknown model");
    let missing = write_config(d.path(), json!({ "seed": 1, "inputs": { "layers": { "1996": "nowhere.shp" } } }));
    assert_eq!(cli(&["grid", "--config", s(&missing), "--out", s(&out)]), 0);
    assert_eq!(cli(&["intersect", "--config", s(&missing), "--out", s(&out)]), 2, "missing input file");
    assert_eq!(cli(&["grid", "--seed", "1", "--out", s(&out), "--threads", "0"]), 2, "zero threads");
}

#[test]
fn missing_or_altered_artifacts_exit_with_3() {
    let d = tempfile::tempdir().unwrap();
    let (cfg, out) = toy(d.path());
    assert_eq!(cli(&["panel", "--config", s(&cfg), "--out", s(&out)]), 3);
    assert_eq!(cli(&["grid", "--config", s(&cfg), "--out", s(&out)]), 0);
    fs::write(out.join("grid.csv"), "cell_id,col,row,left,right,bottom,top\n").unwrap();
    assert_eq!(cli(&["intersect", "--config", s(&cfg), "--out", s(&out)]), 3);
}

#[test]
fn changed_configuration_invalidates_earlier_stages() {
    let d = tempfile::tempdir().unwrap();
    let (cfg, out) = toy(d.path());
    assert_eq!(cli(&["grid", "--config", s(&cfg), "--out", s(&out)]), 0);
    // a different seed is a different configuration
    assert_eq!(cli(&["intersect", "--config", s(&cfg), "--out", s(&out), "--seed", "2"]), 3);
}

#[test]
fn locked_directory_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let (cfg, out) = toy(d.path());
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lock"), "1\n").unwrap();
    assert_eq!(cli(&["grid", "--config", s(&cfg), "--out", s(&out)]), 2);
    fs::remove_file(out.join(".lock")).unwrap();
    assert_eq!(cli(&["grid", "--config", s(&cfg), "--out", s(&out)]), 0);
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), json!({ "seed": 5, "out": "from-config", "threads": 3, "inputs": { "ecv": ["ecv/a.csv"] } }));
    let args = |seed, out: Option<&str>, threads| GlobalArgs { config: Some(cfg.clone()), seed, out: out.map(PathBuf::from), threads };
    let r = Resolved::new(&args(None, None, None)).unwrap();
    assert_eq!((r.seed, r.out.as_path(), r.threads), (5, Path::new("from-config"), Some(3)));
    assert_eq!(r.base, d.path());
    let r = Resolved::new(&args(Some(8), Some("flag"), Some(2))).unwrap();
    assert_eq!((r.seed, r.out.as_path(), r.threads), (8, Path::new("flag"), Some(2)));
    // the hash ignores where the output goes and how many threads run
    assert_eq!(Resolved::new(&args(Some(5), Some("x"), Some(1))).unwrap().config_hash(), Resolved::new(&args(None, None, None)).unwrap().config_hash());
    assert_ne!(r.config_hash(), Resolved::new(&args(None, None, None)).unwrap().config_hash());
    let defaults = Resolved::new(&GlobalArgs { seed: Some(1), out: Some("o".into()), ..Default::default() }).unwrap();
    assert_eq!(defaults.config.pipeline.cv_splits, 10);
}

fn small_run_config(dir: &Path, extra: Value) -> PathBuf {
    let mut body = json!({
        "seed": 4,
        "synth": { "n_cells": 60 },
        "pipeline": {
            "cv_splits": 3, "cv_repeats": 1, "learning_fractions": [1.0], "learning_splits": 2,
            "grid_rows": 30, "grid_folds": 2,
            "svr_grid": { "c": [10.0], "gamma": [0.1], "epsilon": [0.01], "kernels": ["linear"] },
            "row_caps": { "svr": 40, "gbt": 300, "rf": 200 },
            "rf": { "n_trees": 10, "max_depth": 6, "min_leaf": 2, "bootstrap": true, "max_features": null, "max_bins": 32 },
            "gbt": { "n_rounds": 20, "max_depth": 2, "learning_rate": 0.2, "lambda": 1.0, "max_bins": 32 },
            "kmeans_rows": 200, "cqr_rows": 400, "shap_rows": 5, "shap_background": 5
        }
    });
    if let (Some(p), Some(e)) = (body["pipeline"].as_object_mut(), extra.as_object()) {
        p.extend(e.clone());
    }
    write_config(dir, body)
}

#[test]
fn train_writes_one_report_per_model_and_variant() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_run_config(d.path(), json!({}));
    let out = d.path().join("out");
    assert_eq!(cli(&["synth", "--config", s(&cfg), "--out", s(&out)]), 0);
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&out)]), 0);
    let reports: Vec<_> = fs::read_dir(out.join("train/scores")).unwrap().collect();
    assert_eq!(reports.len(), 12);
    for f in ["forecast/forecast.csv", "shap/importance.csv", "cqr/summary.csv", "compare/decision.csv", "eda/correlation.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    // every manifest entry matches the file on disk
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for stage in manifest["stages"].as_object().unwrap().values() {
        for (path, digest) in stage["outputs"].as_object().unwrap() {
            assert_eq!(mangrove_pipeline::digest(&fs::read(out.join(path)).unwrap()), digest.as_str().unwrap(), "{path}");
        }
    }
}

#[test]
fn module_failures_exit_with_4() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_run_config(d.path(), json!({ "cv_splits": 100000 }));
    let out = d.path().join("out");
    assert_eq!(cli(&["synth", "--config", s(&cfg), "--out", s(&out)]), 0);
    for stage in ["grid", "intersect", "panel", "join", "features"] {
        assert_eq!(cli(&[stage, "--config", s(&cfg), "--out", s(&out)]), 0, "{stage}");
    }
    assert_eq!(cli(&["train", "--config", s(&cfg), "--out", s(&out)]), 4);
}
