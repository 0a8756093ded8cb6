use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use explainkit::data::load_csv;
use explainkit::shapley::{summarize, SummaryOptions};
use explainkit::{ModelDocument, ShapleyMethod};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_explainkit");

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("EXPLAINKIT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn prepare(dir: &Path) {
    ok(dir, &["simulate", "--rows", "1500"]);
    ok(dir, &["train", "--data", "simulated.csv", "--max-rounds", "30", "--monotone", "auto"]);
}

/// Simulated data and a small trained model shared by the read-only tests.
fn fixture() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        prepare(dir.path());
        dir
    })
    .path()
}

const EXPLAIN_COMMANDS: &[&[&str]] = &[
    &["surrogate", "--depth", "3", "--folds", "3"],
    &["pd", "--feature", "num9", "--grid-points", "8"],
    &["pd", "--feature", "num1", "--feature-b", "num4", "--grid-points", "4"],
    &["ice", "--feature", "num8", "--grid-points", "8"],
    &["lime", "--samples", "600", "--repeats", "2"],
    &["shap", "--row", "3"],
    &["shap", "--row", "3", "--method", "sampled", "--permutations", "40"],
    &["summary", "--budget", "60"],
    &["reasons", "--percentile", "0.9"],
    &["compare", "--row", "3", "--permutations", "40"],
];

fn run_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    prepare(dir);
    for cmd in EXPLAIN_COMMANDS {
        let mut args = cmd.to_vec();
        args.extend(["--model", "model.json", "--data", "simulated.csv"]);
        ok(dir, &args);
    }
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p: PathBuf| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn every_command_runs_and_reruns_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_all(a.path());
    let second = run_all(b.path());
    for name in [
        "model.json",
        "metrics.json",
        "surrogate.json",
        "surrogate.dot",
        "pd_num9.json",
        "pd_num9.csv",
        "pd_num9.svg",
        "pd2_num1_num4.json",
        "ice_num8.json",
        "ice_num8.svg",
        "lime.json",
        "shap.json",
        "summary.json",
        "summary.svg",
        "reasons.json",
        "compare.json",
        "train.resolved.conf",
    ] {
        assert!(first.contains_key(name), "missing {name}");
    }
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        assert!(bytes == &second[name], "{name} differs between runs");
    }
}

#[test]
fn seed_precedence_is_flag_then_file_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.conf"), "seed = 7\nrows = 20\n").unwrap();
    let seed_of = |conf: &str| {
        let text = std::fs::read_to_string(d.join(conf)).unwrap();
        text.lines().find_map(|l| l.strip_prefix("seed = ")).unwrap().to_string()
    };
    let env_run = |args: &[&str]| {
        let out = Command::new(BIN)
            .args(args)
            .current_dir(d)
            .env("EXPLAINKIT_SEED", "99")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    env_run(&["simulate", "--config", "run.conf", "--seed", "3"]);
    assert_eq!(seed_of("simulate.resolved.conf"), "3");
    env_run(&["simulate", "--config", "run.conf"]);
    assert_eq!(seed_of("simulate.resolved.conf"), "7");
    env_run(&["simulate", "--rows", "20"]);
    assert_eq!(seed_of("simulate.resolved.conf"), "99");
    ok(d, &["simulate", "--rows", "20"]);
    assert_eq!(seed_of("simulate.resolved.conf"), explainkit::DEFAULT_SEED.to_string());
}

#[test]
fn flag_overrides_config_and_echo_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.conf"), "rows = 30\nnoise = 0.2\nout = a.csv\n").unwrap();
    ok(d, &["simulate", "--config", "run.conf", "--rows", "25"]);
    let echo = std::fs::read_to_string(d.join("simulate.resolved.conf")).unwrap();
    assert!(echo.contains("rows = 25\n") && echo.contains("noise = 0.2\n"));
    let first = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 26);
    std::fs::remove_file(d.join("a.csv")).unwrap();
    std::fs::rename(d.join("simulate.resolved.conf"), d.join("echo.conf")).unwrap();
    ok(d, &["simulate", "--config", "echo.conf"]);
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), first);
}

#[test]
fn bad_input_exits_nonzero() {
    let d = fixture();
    let fails = |args: &[&str]| {
        let out = run_in(d, args);
        assert!(!out.status.success(), "{args:?} should fail");
        String::from_utf8_lossy(&out.stderr).into_owned()
    };
    fails(&["explode"]);
    fails(&["shap", "--model", "model.json", "--data", "simulated.csv", "--method", "guess"]);
    fails(&["pd", "--model", "model.json", "--data", "simulated.csv", "--feature", "nope"]);
    fails(&["shap", "--model", "model.json", "--data", "simulated.csv", "--row", "1", "--percentile", "0.5"]);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.conf"), "rowz = 5\n").unwrap();
    let err = {
        let out = run_in(dir.path(), &["simulate", "--config", "typo.conf"]);
        assert!(!out.status.success());
        String::from_utf8_lossy(&out.stderr).into_owned()
    };
    assert!(err.contains("rowz"), "{err}");
    let stderr = fails(&["shap", "--data", "simulated.csv"]);
    assert!(stderr.contains("model"), "{stderr}");
}

#[test]
fn model_and_data_feature_names_must_match() {
    let d = fixture();
    let csv = std::fs::read_to_string(d.join("simulated.csv")).unwrap();
    let renamed = csv.replacen("num1,", "other,", 1);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("renamed.csv"), renamed).unwrap();
    let model = d.join("model.json");
    let out = run_in(
        dir.path(),
        &["shap", "--model", model.to_str().unwrap(), "--data", "renamed.csv"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not match"));
}

#[test]
fn summary_ordering_matches_library() {
    let d = fixture();
    let out = tempfile::tempdir().unwrap();
    let out_dir = out.path().to_str().unwrap();
    ok(
        d,
        &["summary", "--model", "model.json", "--data", "simulated.csv", "--budget", "80", "--out-dir", out_dir],
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    let cli_order: Vec<&str> = json["ranking"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["feature"].as_str().unwrap())
        .collect();

    let doc = ModelDocument::load(&d.join("model.json")).unwrap();
    let data = load_csv(&d.join("simulated.csv"), "label", None).unwrap();
    let options = SummaryOptions {
        method: ShapleyMethod::Exact,
        budget: Some(80),
        seed: explainkit::DEFAULT_SEED,
        ..SummaryOptions::default()
    };
    let report = summarize(&doc.model, &data, None, &options).unwrap();
    let lib_order: Vec<&str> = report.ordering.iter().map(|&j| doc.feature_names[j].as_str()).collect();
    assert_eq!(cli_order, lib_order);
    assert_eq!(json["rows_explained"], 80);
}

#[test]
fn reasons_use_codebook_labels() {
    let d = fixture();
    let out = tempfile::tempdir().unwrap();
    let shap_dir = out.path().join("shap");
    ok(
        d,
        &[
            "shap", "--model", "model.json", "--data", "simulated.csv", "--row", "0",
            "--out-dir", shap_dir.to_str().unwrap(),
        ],
    );
    let shap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(shap_dir.join("shap.json")).unwrap()).unwrap();
    let top = shap["attributions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["phi"].as_f64().unwrap() > 0.0)
        .max_by(|a, b| a["phi"].as_f64().unwrap().total_cmp(&b["phi"].as_f64().unwrap()))
        .expect("row 0 has a positive attribution");
    let book = out.path().join("codes.csv");
    std::fs::write(
        &book,
        format!("feature,value,label\n{},{},the coded value\n", top["feature"].as_str().unwrap(), top["value"]),
    )
    .unwrap();
    let stdout = ok(
        d,
        &[
            "reasons", "--model", "model.json", "--data", "simulated.csv", "--row", "0", "--k", "2",
            "--codebook", book.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap(),
        ],
    );
    assert!(stdout.starts_with(&format!("1. feature {} is the coded value", top["feature"].as_str().unwrap())), "{stdout}");
}
