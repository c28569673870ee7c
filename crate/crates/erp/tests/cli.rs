use std::path::Path;
use std::process::{Command, Output};

fn erp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erp")).args(args).output().unwrap()
}

fn data_args(o: &str) -> Vec<String> {
    vec![
        "--prompts".into(), format!("{o}/prompts.jsonl"),
        "--rewards".into(), format!("{o}/rewards.jsonl"),
        "--pool".into(), format!("{o}/pool.json"),
        "--out-dir".into(), o.into(),
    ]
}

fn run(sub: &str, o: &str, extra: &[&str]) -> Output {
    let mut args = vec![sub.to_string()];
    args.extend(data_args(o));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    erp(&refs)
}

fn synth_small(dir: &Path, extra: &[&str]) -> String {
    let o = dir.to_str().unwrap().to_string();
    let mut args = vec!["synth", "--out-dir", &o, "--prompts-per-category", "30", "--samples-per-prompt", "4", "--n-models", "3"];
    args.extend_from_slice(extra);
    let out = erp(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    o
}

#[test]
fn train_writes_one_predictor_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth_small(dir.path(), &[]);
    assert!(run("train", &o, &[]).status.success());
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("predictors"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["m0.json", "m1.json", "m2.json"]);
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("predictors/m1.json")).unwrap()).unwrap();
    let keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    for k in ["model_id", "beta", "dim", "bias", "weights"] {
        assert!(keys.contains(&k), "{k}");
    }
}

#[test]
fn sweep_policy_filter_and_single_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth_small(dir.path(), &[]);
    assert!(run("train", &o, &[]).status.success());
    let out = run("sweep", &o, &["--policies", "erp", "--lambda-grid", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("erp,"), "{}", rows[0]);
}

#[test]
fn eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth_small(dir.path(), &[]);
    assert!(run("train", &o, &[]).status.success());
    assert!(run("eval", &o, &[]).status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["auroc"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("scatter.csv").exists());
}

#[test]
fn empty_pool_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let out = erp(&["synth", "--out-dir", o, "--n-models", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prop1_with_zero_samples_is_a_usage_error() {
    assert_eq!(erp(&["prop1", "--n", "0"]).status.code(), Some(1));
}

#[test]
fn prop1_prints_json() {
    let out = erp(&["prop1", "--mu1", "2", "--n", "1000"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["bound"].as_f64().unwrap() - 0.6321205588285577).abs() < 1e-12);
}

#[test]
fn unregularized_collinear_fit_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth_small(dir.path(), &["--dim", "80"]);
    let out = run("train", &o, &["--beta", "0"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_predictor_names_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth_small(dir.path(), &[]);
    assert!(run("train", &o, &[]).status.success());
    std::fs::remove_file(dir.path().join("predictors/m2.json")).unwrap();
    let out = run("sweep", &o, &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("m2"));
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(erp(&["train", "--nope"]).status.code(), Some(1));
}
