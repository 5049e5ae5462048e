use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cca_core::dgp::{sample_bivariate, DgpKind, DgpSpec};
use serde_json::Value;

fn cca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cca")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cca(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cca(args).status.code().expect("exit code")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn validate(file: &Path, schema: &str) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_dir().join(schema)).unwrap()).unwrap();
    let v = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = v.validate(&doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{} does not match {schema}: {msgs:?}", file.display(), schema = schema);
    }
    validate_manifest(file.parent().unwrap());
    doc
}

fn validate_manifest(dir: &Path) {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_dir().join("manifest.schema.json")).unwrap()).unwrap();
    assert!(jsonschema::JSONSchema::compile(&schema).unwrap().is_valid(&doc));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn calculators_print_values() {
    let v: f64 = ok(&["pac-bound", "--dc", "3", "--tau-mix", "10", "--gamma", "0.9", "--eps", "0.1", "--delta", "0.05", "--c", "1"])
        .trim()
        .parse()
        .unwrap();
    let want = 10.0 * 3.0 * (3.0f64 / 0.05).ln() / (0.1f64.powi(3) * 0.01);
    assert!((v - want).abs() / want < 1e-9);
    assert!((v - 1.228e7).abs() / 1.228e7 < 1e-3);
    let l: f64 = ok(&["lambda2-threshold", "--gamma", "0.9", "--v", "3", "--e-max", "3"]).trim().parse().unwrap();
    assert!((l - 0.1 * 3f64.ln() / 3.0).abs() < 1e-15);
}

#[test]
fn calculator_outputs_validate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["pac-bound", "--out", p(dir.path())]);
    validate(&dir.path().join("pac_bound.json"), "pac_bound.schema.json");
    ok(&["lambda2-threshold", "--out", p(dir.path())]);
    validate(&dir.path().join("lambda2_threshold.json"), "lambda2_threshold.schema.json");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["exp1", "--no-such-flag"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["exp1", "--set", "experiment.typo=3"]), 1);
    assert_eq!(code(&["exp1", "--set", "train.tau=-1"]), 1);
    assert_eq!(code(&["lambda2-threshold", "--gamma", "1.5"]), 1);
    assert_eq!(code(&["score-pair"]), 1);
    assert_eq!(code(&["score-pair", "--input", "/no/such/file.csv"]), 2);
    assert_eq!(code(&["tuebingen", "--data", "/no/such/dir"]), 2);
    assert_eq!(code(&["exp1", "--config", "/no/such/config.toml"]), 2);
    assert_eq!(code(&["pac-bound", "--dc", "0.01", "--delta", "0.05"]), 3);
}

#[test]
fn error_messages_differ() {
    let msg = |args: &[&str]| String::from_utf8(cca(args).stderr).unwrap();
    let a = msg(&["exp1", "--set", "experiment.typo=3"]);
    let b = msg(&["exp1", "--set", "train.tau=-1"]);
    let c = msg(&["tuebingen", "--data", "/no/such/dir"]);
    assert!(a.contains("experiment.typo"));
    assert!(b.contains("tau"));
    assert!(c.contains("/no/such/dir"));
}

#[test]
fn score_pair_prints_score_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pair.csv");
    let s = sample_bivariate(&DgpSpec::new(DgpKind::Sin, 200, 0.1), 5).unwrap();
    s.write_csv(std::fs::File::create(&input).unwrap()).unwrap();
    let out = ok(&["score-pair", "--input", p(&input), "--seed", "0", "--set", "train.t_max=300"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let score = v["score"].as_i64().unwrap();
    assert_eq!(score, v["t_fwd"].as_i64().unwrap() - v["t_rev"].as_i64().unwrap());

    let res = dir.path().join("res");
    ok(&["score-pair", "--input", p(&input), "--seeds", "2", "--set", "train.t_max=300", "--out", p(&res)]);
    let doc = validate(&res.join("score.json"), "score.schema.json");
    let scores = doc["scores"].as_array().unwrap();
    let steps: u64 = scores.iter().map(|s| s["t_fwd"].as_u64().unwrap() + s["t_rev"].as_u64().unwrap()).sum();
    assert_eq!(csv_rows(&res.join("fig2_loss_curves.csv")).len() as u64, steps + 1);
}

#[test]
fn empty_grid_gives_header_only_csvs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["exp1", "--out", p(dir.path()), "--set", "dgps=[]"]);
    for f in ["runs.csv", "table2.csv", "fig2_loss_curves.csv", "fig3_cca_scores.csv"] {
        assert_eq!(csv_rows(&dir.path().join(f)).len(), 1, "{f}");
    }
    let doc = validate(&dir.path().join("exp1.json"), "exp1.schema.json");
    assert_eq!(doc["report"]["runs"], Value::Array(vec![]));
    assert_eq!(doc["report"]["per_dgp"], Value::Array(vec![]));
}

#[test]
fn exp1_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    ok(&["exp1", "--out", out, "--dgps", "sin,linear", "--seeds", "2", "--t-max", "200", "--n", "200"]);
    let doc = validate(&dir.path().join("exp1.json"), "exp1.schema.json");
    let runs = doc["report"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2 * 6 * 2);
    assert_eq!(csv_rows(&dir.path().join("runs.csv")).len(), runs.len() + 1);
    assert_eq!(csv_rows(&dir.path().join("fig3_cca_scores.csv")).len(), runs.len() + 1);
    // One row per evaluated step and direction; evaluation runs every step.
    let eval_points: u64 = runs.iter().map(|r| r["score"]["t_fwd"].as_u64().unwrap() + r["score"]["t_rev"].as_u64().unwrap()).sum();
    assert_eq!(csv_rows(&dir.path().join("fig2_loss_curves.csv")).len() as u64, eval_points + 1);
    // Cells plus one total per DGP.
    assert_eq!(csv_rows(&dir.path().join("table2.csv")).len(), 2 * 7 + 1);
    assert_eq!(csv_rows(&dir.path().join("table3.csv")).len(), 6 + 1);
}

#[test]
fn manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["exp1", "--out", p(&a), "--dgps", "exp", "--seeds", "1", "--t-max", "150", "--n", "150", "--seed", "9"]);
    ok(&["exp1", "--out", p(&b), "--config", p(&a.join("manifest.json"))]);
    for f in ["runs.csv", "table2.csv", "table3.csv", "fig2_loss_curves.csv", "fig3_cca_scores.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m: Value = serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 9);
    assert_eq!(m["config"]["train"]["t_max"], 150);
}

#[test]
fn toml_config_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[exp1]\nseed = 4\ndgps = [\"sin\"]\n[exp1.experiment]\nn = 120\nn_seeds = 1\n[exp1.train]\nt_max = 100\n").unwrap();
    let out = dir.path().join("out");
    ok(&["exp1", "--config", p(&cfg), "--seed", "6", "--set", "train.t_max=90", "--out", p(&out)]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 6);
    assert_eq!(m["config"]["experiment"]["n"], 120);
    assert_eq!(m["config"]["train"]["t_max"], 90);
    assert_eq!(m["config"]["architectures"][4]["step_size"], 0.01);

    std::fs::write(&cfg, "[boundary]\nseed = 1\n").unwrap();
    assert_eq!(code(&["exp1", "--config", p(&cfg), "--out", p(&out)]), 1);
    assert_eq!(code(&["exp1", "--config", p(&out.join("manifest.json")), "--out", p(&out)]), 0);
    assert_eq!(code(&["boundary", "--config", p(&out.join("manifest.json")), "--out", p(&out)]), 1);
}

#[test]
fn boundary_and_gradvar_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    ok(&["boundary", "--out", p(&b), "--seeds", "1", "--t-max", "100", "--n", "100", "--set", "architectures=[{}]"]);
    validate(&b.join("boundary.json"), "boundary.schema.json");
    assert_eq!(csv_rows(&b.join("fig4_boundary.csv")).len(), 4 + 1);
    assert_eq!(csv_rows(&b.join("fig3_cca_scores.csv")).len(), 2 + 1);

    let g = dir.path().join("g");
    ok(&["gradvar", "--out", p(&g), "--seeds", "2", "--n-batches", "5", "--set", "phases=[0, 10]", "--set", "experiment.n=100"]);
    validate(&g.join("gradvar.json"), "gradvar.schema.json");
    assert_eq!(csv_rows(&g.join("gradvar_rows.csv")).len(), 2 * 2 * 2 + 1);
    assert_eq!(csv_rows(&g.join("table6.csv")).len(), 2 * 2 + 1);
}

#[test]
fn ccl_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["ccl-sweep", "--out", p(dir.path()), "--n", "200", "--lambda2", "0.1,0.5", "--set", "train.t_max=100"]);
    assert!(out.contains("lambda2 0.5"));
    let doc = validate(&dir.path().join("ccl_sweep.json"), "ccl_sweep.schema.json");
    assert_eq!(doc["traces"].as_array().unwrap().len(), 2);
    assert_eq!(csv_rows(&dir.path().join("table5.csv")).len(), 3);
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/tuebingen-mini")
}

#[test]
fn tuebingen_fixture_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["tuebingen", "--data", p(&fixture()), "--out", p(dir.path()), "--seeds", "1", "--t-max", "300"]);
    let doc = validate(&dir.path().join("tuebingen.json"), "tuebingen.schema.json");
    assert_eq!(doc["report"]["loaded"], 3);
    assert_eq!(csv_rows(&dir.path().join("tuebingen_pairs.csv")).len(), 4);
    assert_eq!(csv_rows(&dir.path().join("fig5_tuebingen.csv")).len(), 4);
}

#[test]
fn tuebingen_empty_directory() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let res = cca(&["tuebingen", "--data", p(data.path()), "--out", p(out.path())]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));
    let doc = validate(&out.path().join("tuebingen.json"), "tuebingen.schema.json");
    assert_eq!(doc["report"]["metrics"], Value::Null);
    assert_eq!(csv_rows(&out.path().join("fig5_tuebingen.csv")).len(), 1);
}
