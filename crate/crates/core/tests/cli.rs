use std::fs;
use std::path::Path;

use rjdcov::cli::{main_with_args, run};
use serde_json::Value;

fn run_ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut full = vec!["rjdcov"];
    full.extend_from_slice(args);
    run(full, &mut out).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    String::from_utf8(out).unwrap()
}

fn run_err(args: &[&str]) -> String {
    let mut full = vec!["rjdcov"];
    full.extend_from_slice(args);
    run(full, &mut Vec::new()).unwrap_err().to_string()
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn simulate_to(dir: &Path, model: &str, param: &str, n: &str) -> String {
    let path = dir.join(format!("{model}.csv"));
    run_ok(&["simulate", "--model", model, "--param", param, "--n", n, "--seed", "3", "--out", path.to_str().unwrap()]);
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_is_deterministic_and_matches_golden() {
    let a = run_ok(&["simulate", "--model", "sign-gaussian", "--param", "1", "--n", "4", "--seed", "5"]);
    let b = run_ok(&["simulate", "--model", "sign-gaussian", "--param", "1", "--n", "4", "--seed", "5"]);
    assert_eq!(a, b);
    let golden = include_str!("golden/simulate_sign_gaussian.csv");
    assert_eq!(a, golden);
}

#[test]
fn test_report_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "null-gaussian", "0", "60");
    let cache = dir.path().join("cache");
    let args = [
        "test", &data, "--blocks", "1-3,4-6,7-9", "--alpha", "0.05", "--B", "99", "--seed", "7", "--cache-dir",
        cache.to_str().unwrap(),
    ];
    let first = run_ok(&args);
    let second = run_ok(&args);
    assert_eq!(first, second, "same input and seed must give byte-identical reports");
    let no_cache = run_ok(&["test", &data, "--blocks", "1-3,4-6,7-9", "--B", "99", "--seed", "7", "--no-cache"]);
    assert_eq!(first, no_cache);

    let v: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(
        keys(&v),
        [
            "B", "alpha", "block_dims", "cutoff", "grid", "kind", "n", "p_value", "rank", "reject", "schema_version", "seed",
            "statistic", "subsets", "test",
        ]
    );
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["block_dims"], serde_json::json!([3, 3, 3]));
    assert_eq!(v["subsets"].as_array().unwrap().len(), 4);
    assert_eq!(keys(&v["subsets"][0]), ["S", "rdcov2", "weight"]);
    let p = v["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert!(first.ends_with("}\n"));
}

#[test]
fn test_kinds_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "sign-gaussian", "1", "80");
    let out = dir.path().join("report.json");
    let stdout = run_ok(&[
        "test", &data, "--kind", "subset", "--subset", "1,2,3", "--B", "49", "--no-cache", "--out", out.to_str().unwrap(),
    ]);
    assert!(stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["kind"], "subset");
    assert!(v["note"].as_str().unwrap().contains("proper sub-family"));

    let v: Value = serde_json::from_str(&run_ok(&["test", &data, "--kind", "pairwise", "--B", "49", "--no-cache"])).unwrap();
    assert_eq!(v["kind"], "pairwise-aggregate");
    assert_eq!(v["subsets"].as_array().unwrap().len(), 3);

    let v: Value =
        serde_json::from_str(&run_ok(&["test", &data, "--weights", "0,1", "--B", "49", "--no-cache"])).unwrap();
    assert_eq!(v["test"]["weights"]["scheme"], "explicit");
}

#[test]
fn missing_column_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x,y,z\n1,2,3\n4,5\n7,8,9\n").unwrap();
    let err = run_err(&["test", path.to_str().unwrap(), "--no-cache"]);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("missing column 3 (`z`)"), "{err}");
}

#[test]
fn block_spec_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "null-gaussian", "0", "20");
    assert!(run_err(&["test", &data, "--blocks", "1-3,3-9", "--no-cache"]).contains("more than one block"));
    assert!(run_err(&["test", &data, "--blocks", "1-3,4-8", "--no-cache"]).contains("not assigned"));
}

#[test]
fn schema_file_labels_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "sign-gaussian", "1", "60");
    let schema = dir.path().join("blocks.json");
    fs::write(&schema, r#"{"blocks":[{"name":"X","from":1,"to":1},{"name":"Y","from":2,"to":2},{"name":"Z","from":3,"to":3}]}"#)
        .unwrap();
    let dot = dir.path().join("g.dot");
    let json = run_ok(&[
        "structure", &data, "--schema", schema.to_str().unwrap(), "--B", "49", "--no-cache", "--dot", dot.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["labels"], serde_json::json!(["X", "Y", "Z"]));
    assert_eq!(
        keys(&v),
        ["B", "alpha", "edges", "grid", "hyperedges", "labels", "multiplicity", "pairs", "schema_version", "seed", "triples"]
    );
    assert_eq!(v["pairs"].as_array().unwrap().len(), 3);
    assert_eq!(keys(&v["pairs"][0]), ["blocks", "p_adjusted", "p_value", "significant", "statistic"]);
    assert!(fs::read_to_string(dot).unwrap().starts_with("graph dependency {"));
}

#[test]
fn power_csv_header() {
    let csv = run_ok(&[
        "power", "--model", "mixture", "--params", "0,1", "--n", "30", "--replicates", "4", "--test", "joint", "--test",
        "subset:1,2,3", "--B", "19", "--no-cache",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "schema_version,model,param,n,test,replicates,rejections,rate,se,wall_seconds");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,mixture,0,30,joint,4,"));
    assert!(rows[1].starts_with("1,mixture,0,30,subset{1,2,3},4,") || rows[1].starts_with("1,mixture,0,30,\"subset{1,2,3}\",4,"));

    let table = run_ok(&["power", "--sign-table", "--n", "30", "--replicates", "2", "--B", "19", "--no-cache"]);
    assert_eq!(table.lines().next().unwrap(), "schema_version,law,n,d,replicates,pairwise,higher_order,joint");
    assert_eq!(table.lines().count(), 5);
    assert!(run_err(&["power", "--model", "mixture", "--replicates", "0", "--no-cache"]).contains("replicates"));
}

#[test]
fn ica_report_and_sources() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    // two uniform sources mixed by a fixed matrix
    let mut text = String::from("a,b\n");
    for k in 0..120u64 {
        let s1 = ((k * 37) % 101) as f64 / 101.0 - 0.5;
        let s2 = ((k * 53 + 7) % 97) as f64 / 97.0 - 0.5;
        text.push_str(&format!("{},{}\n", s1 + 0.5 * s2, 0.3 * s1 + s2));
    }
    fs::write(&data, text).unwrap();
    let sources = dir.path().join("s.csv");
    let args = [
        "ica", data.to_str().unwrap(), "--restarts", "2", "--max-iter", "30", "--seed", "4", "--sources",
        sources.to_str().unwrap(),
    ];
    let json = run_ok(&args);
    assert_eq!(json, run_ok(&args));
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(
        keys(&v),
        [
            "bandwidth", "c", "converged", "gradient", "mixing_hat", "n", "objective", "r", "restart_dispersion", "restarts",
            "schema_version", "seed", "theta_hat", "trace", "unmixing", "w_hat",
        ]
    );
    assert_eq!(v["bandwidth"]["rule"], "silverman");
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 1);
    assert_eq!(keys(&v["trace"][0]), ["grad_norm", "iteration", "value"]);
    let s = fs::read_to_string(&sources).unwrap();
    assert!(s.starts_with("s1,s2\n"));
    assert_eq!(s.lines().count(), 121);
}

#[test]
fn clt_check_report() {
    let v: Value = serde_json::from_str(&run_ok(&["clt-check", "--n", "20", "--draws", "500", "--seed", "2"])).unwrap();
    assert_eq!(
        keys(&v),
        [
            "analytic_var", "draws", "empirical_mean", "empirical_var", "k1", "k2", "ks_pvalue", "ks_statistic", "n", "order",
            "relative_var_error", "schema_version", "seed", "sum_sq",
        ]
    );
    assert!(run_err(&["clt-check", "--n", "20", "--k2", "1000"]).contains("sum of squares"));
}

#[test]
fn exit_codes() {
    assert_eq!(main_with_args(["rjdcov", "simulate", "--model", "null-gaussian", "--n", "3", "--out", "/dev/null"]), 0);
    assert_eq!(main_with_args(["rjdcov", "simulate", "--model", "no-such-model", "--n", "3"]), 1);
    assert_eq!(main_with_args(["rjdcov", "frobnicate"]), 2);
}
