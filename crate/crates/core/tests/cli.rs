use std::path::PathBuf;

use erlab::lab::cli::{run, EXIT_ENGINE, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn corpus_file(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(format!("{name}.rule.json"))
        .display()
        .to_string()
}

fn erlab(args: &str) -> (i32, String, String) {
    let argv: Vec<&str> = std::iter::once("erlab")
        .chain(args.split_whitespace())
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = erlab("--help");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("verify"));
    let (code, out, _) = erlab("--version");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors() {
    assert_eq!(erlab("entropy --rule f1").0, EXIT_USAGE);
    assert_eq!(erlab("bogus").0, EXIT_USAGE);
    let (code, _, err) = erlab("permutativity --rule /no/such/file.json");
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("no such rule"));
    // a band needs n >= r
    assert_eq!(erlab("entropy --rule f1-r2 --n 1").0, EXIT_USAGE);
    assert_eq!(
        erlab("entropy --rule xor-1d --partition square --n 1").0,
        EXIT_USAGE
    );
}

#[test]
fn malformed_rule_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.rule.json");
    std::fs::write(&path, r#"{"dimension": 2, "q": 2}"#).unwrap();
    let (code, _, err) = erlab(&format!("permutativity --rule {}", path.display()));
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bad.rule.json"));
}

#[test]
fn budget_errors_are_engine_errors() {
    let (code, _, err) = erlab(
        "entropy --rule and --partition square --n 1 --steps 2 --method enumeration --budget 1000",
    );
    assert_eq!(code, EXIT_ENGINE);
    assert!(err.contains("budget"));
    let (code, _, _) = erlab("entropy --rule and --n 1 --method rank");
    assert_eq!(code, EXIT_ENGINE);
}

#[test]
fn entropy_json_and_csv() {
    let (code, out, _) = erlab(&format!(
        "entropy --rule {} --partition square --n 1 --steps 2",
        corpus_file("f1")
    ));
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], "erlab/1");
    assert_eq!(v["rule"]["name"], "f1");
    assert_eq!(v["curve"]["method"], "rank");
    assert_eq!(v["curve"]["points"][1]["top_units"], 12);

    let (code, out, _) = erlab(
        "--format csv entropy --rule f1 --partition square --n 1 --steps 2 --method enumeration",
    );
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("rule,partition,n,N,method"));
    assert!(lines[2].starts_with("f1,square,1,2,enumeration,"));
}

#[test]
fn rate_reports_the_fit() {
    let (code, out, _) = erlab("rate --rule plus --n-min 1 --n-max 3");
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["estimate"]["measure"]["fitted_units"]["num"], 8);
    let (code, out, _) = erlab("rate --rule xor-1d --n-min 1 --n-max 2 --format csv");
    assert_eq!(code, EXIT_OK);
    assert!(out
        .lines()
        .skip(1)
        .all(|l| l.starts_with("xor-1d,interval,")));
}

#[test]
fn permutativity_report() {
    let (code, out, _) = erlab("permutativity --rule plus");
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["analysis"]["fully_pt_permutative"], true);
    let (_, out, _) = erlab("--format csv permutativity --rule f1");
    assert!(out.contains("f1,1,0,true"));
    assert!(out.contains("f1,0,0,false"));
}

#[test]
fn verify_writes_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, out, _) = erlab(&format!(
        "verify --suite permutative --rule f12 --out {}",
        path.display()
    ));
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["schema"], "erlab/1");
    assert_eq!(v["summary"]["failed"], 0);
    let ids: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["anchor"].as_str().is_some_and(|a| !a.is_empty())));
}

#[test]
fn verify_csv_has_one_row_per_check() {
    let (code, out, _) = erlab("--format csv verify --suite bounds --rule and --seed 7");
    assert_eq!(code, EXIT_OK);
    let mut rows = csv::Reader::from_reader(out.as_bytes());
    let statuses: Vec<String> = rows.records().map(|r| r.unwrap()[2].to_string()).collect();
    assert!(!statuses.is_empty());
    assert!(statuses
        .iter()
        .all(|s| ["pass", "diagnostic", "skipped"].contains(&s.as_str())));
}

#[test]
fn thread_count_does_not_change_output() {
    let base = "entropy --rule plus --partition band --n 1 --steps 2 --method mc --samples 20000 --seed 11";
    let one = erlab(&format!("--threads 1 {base}"));
    let four = erlab(&format!("--threads 4 {base}"));
    assert_eq!(one.0, EXIT_OK);
    assert_eq!(one.1, four.1);
}

#[test]
fn binary_exit_codes() {
    let status = |args: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_erlab"))
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(status(&["permutativity", "--rule", "f1"]), Some(EXIT_OK));
    assert_eq!(status(&["entropy"]), Some(EXIT_USAGE));
    assert_eq!(
        status(&[
            "entropy",
            "--rule",
            "and",
            "--n",
            "1",
            "--method",
            "enumeration",
            "--budget",
            "10"
        ]),
        Some(EXIT_ENGINE)
    );
}

#[test]
fn documented_invocations() {
    let (code, out, _) = erlab(&format!("permutativity --rule {}", corpus_file("plus")));
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    let positions = v["analysis"]["permutative_positions"].as_array().unwrap();
    assert_eq!(positions.len(), 4);

    let (code, out, _) = erlab(&format!(
        "rate --rule {} --method rank --n-min 1 --n-max 3",
        corpus_file("f1")
    ));
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    let fitted = v["estimate"]["measure"]["fitted_rate"].as_f64().unwrap();
    assert!((fitted - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

    let (code, out, _) = erlab(&format!(
        "verify --suite all --rule {} --seed 7",
        corpus_file("plus")
    ));
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["environment"]["seed"], 7);
    assert_eq!(v["summary"]["failed"], 0);
}

#[test]
fn exact_means_enumeration() {
    let (_, out, _) = erlab("entropy --rule f12 --n 1 --steps 2 --method exact");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["curve"]["method"], "enumeration");
    let (_, out, _) = erlab("entropy --rule f12 --n 1 --steps 2");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["curve"]["method"], "rank");
}
