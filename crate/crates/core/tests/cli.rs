use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelbundle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn spec_str(name: &str) -> String {
    spec(name).to_string_lossy().into_owned()
}

#[test]
fn locate_finds_the_double_point() {
    let v = json(&run(&["locate", "--spec", &spec_str("jordan.json")]));
    let zeros = v["report"]["zeros"].as_array().unwrap();
    assert_eq!(zeros.len(), 1);
    assert_eq!(zeros[0]["multiplicity"], 2);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn reduce_writes_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reduce.json");
    let o = run(&["reduce", "--spec", &spec_str("branching.json"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["family"], "branching");
    assert_eq!(v["roots"][0]["chains"].as_array().unwrap().len(), 2);
    assert!(v["canonical"].as_array().unwrap().iter().all(|r| r.is_object()));
}

#[test]
fn frame_and_pair_at_a_parameter() {
    let v = json(&run(&["frame", "--spec", &spec_str("branching.json"), "--y", "0.1"]));
    assert_eq!(v["frame"]["entries"].as_array().unwrap().len(), 2);
    assert_eq!(v["dual_frame"]["entries"].as_array().unwrap().len(), 2);
    let v = json(&run(&["pair", "--spec", &spec_str("jordan.json"), "--nodes", "64"]));
    assert!(v["pairing"]["cond"].as_f64().unwrap() < 1e8);
}

#[test]
fn sweep_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    let o = run(&[
        "sweep",
        "--spec",
        &spec_str("branching.json"),
        "--grid",
        "-0.2:0.2:11",
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 11);
    assert_eq!(v["dimension_constant"], true);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,cluster,re_sigma,im_sigma,mult"));
    let mults: usize = lines.map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(mults, 22);
}

#[test]
fn trace_of_the_indicial_family() {
    let v = json(&run(&["trace", "--spec", &spec_str("indicial.json")]));
    assert_eq!(v["terms"].as_array().unwrap().len(), 2);
    assert!(v["agreement"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["samples"].as_array().unwrap().len(), 25);
}

#[test]
fn inline_probe_is_accepted() {
    let v = json(&run(&[
        "pair",
        "--spec",
        &spec_str("branching.json"),
        "--y",
        "0.05",
        "--probe",
        r#"{"vector": [[0, 1], [1, 0]]}"#,
    ]));
    assert_eq!(v["probe"]["values"].as_array().unwrap().len(), 2);
    assert!(v["probe"]["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn parse_errors_exit_with_2() {
    assert_eq!(run(&["locate"]).status.code(), Some(2));
    assert_eq!(run(&["locate", "--spec", &spec_str("jordan.json"), "--bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"family\": ").unwrap();
    assert_eq!(run(&["locate", "--spec", bad.to_str().unwrap()]).status.code(), Some(2));
    let o = run(&["sweep", "--spec", &spec_str("branching.json"), "--grid", "1:0:5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["locate", "--spec", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_with_3() {
    // the two singular points leave the eps/2 disc long before y = 1
    let o = run(&["sweep", "--spec", &spec_str("branching.json"), "--grid", "0:1:11"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // a(y) = y M exceeds r_bound = 0.4 at |y| = 2
    let o = run(&["reduce", "--spec", &spec_str("sl.json"), "--grid", "-2:2:5"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.json");
    std::fs::write(
        &zero,
        r#"{"family": {"kind": "matrix_polynomial", "n": 1, "terms": [{"matrix": [[[0, 0]]]}]},
            "sigma": {"kind": "rectangle", "re": [-1, 1], "im": [-1, 1]}}"#,
    )
    .unwrap();
    let o = run(&["locate", "--spec", zero.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
