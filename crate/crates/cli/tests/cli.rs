use std::path::Path;
use std::process::{Command, Output};

use aro_split::fixtures;
use aro_split::model::{AffineVector, Polyhedron};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aro-split"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn trace_rounds(path: &Path) -> Vec<serde_json::Value> {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["rounds"].as_array().unwrap().clone()
}

#[test]
fn solve_toy() {
    let dir = tempfile::tempdir().unwrap();
    fixtures::toy_1d()
        .save(dir.path().join("toy.json"))
        .unwrap();
    let o = bin(
        dir.path(),
        &["solve", "--input", "toy.json", "--out", "trace.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("t_bar: 1\n"), "{}", stdout(&o));
    let rounds = trace_rounds(&dir.path().join("trace.json"));
    assert_eq!(rounds.len(), 1);
    assert_eq!(rounds[0]["t_bar"].as_f64(), Some(1.0));
}

#[test]
fn solve_deterministic_problem() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = fixtures::integer_pair();
    p.constraints[0].w = AffineVector::constant(vec![1.0, 2.0], 1);
    p.save(dir.path().join("det.json")).unwrap();
    let o = bin(
        dir.path(),
        &["solve", "--input", "det.json", "--max-cells", "4"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // y₁ + y₂ with y₁ + 2y₂ ≥ 1.5 over the integers: y = (0, 1).
    assert!(stdout(&o).contains("t_bar: 1\n"), "{}", stdout(&o));
    assert_eq!(trace_rounds(&dir.path().join("trace.json")).len(), 1);
}

#[test]
fn solve_splits_the_integer_example() {
    let dir = tempfile::tempdir().unwrap();
    fixtures::integer_pair()
        .save(dir.path().join("ex.json"))
        .unwrap();
    let o = bin(
        dir.path(),
        &[
            "solve",
            "--input",
            "ex.json",
            "--max-cells",
            "2",
            "--out",
            "ex-trace.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rounds = trace_rounds(&dir.path().join("ex-trace.json"));
    assert_eq!(rounds[0]["t_bar"].as_f64(), Some(4.0));
    assert!(rounds.last().unwrap()["t_bar"].as_f64().unwrap() <= 3.0 + 1e-9);
}

#[test]
fn malformed_input_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"L\": 1,").unwrap();
    let o = bin(dir.path(), &["solve", "--input", "bad.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("parse error"), "{}", stderr(&o));
}

#[test]
fn unbounded_set_names_the_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = fixtures::toy_1d();
    p.base_set = Polyhedron::new(1, vec![vec![1.0]], vec![1.0]).unwrap();
    p.save(dir.path().join("unbounded.json")).unwrap();
    let o = bin(dir.path(), &["solve", "--input", "unbounded.json"]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("uncertainty set must be nonempty and bounded"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn experiment_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "rpp-experiment",
            "--n",
            "10",
            "--b",
            "3",
            "--instances",
            "3",
            "--target-cells",
            "2",
            "--theta",
            "0,0.5,0.9",
            "--seed",
            "42",
            "--out",
            out,
        ]
    };
    for out in ["a", "b"] {
        let o = bin(dir.path(), &args(out));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    let runs = String::from_utf8(read("a/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * (1 + 3));
    for f in ["runs.csv", "summary.csv", "curves.csv"] {
        assert_eq!(
            read(&format!("a/{f}")),
            read(&format!("b/{f}")),
            "{f} differs"
        );
    }
}

#[test]
fn config_file_supplies_the_command() {
    let dir = tempfile::tempdir().unwrap();
    fixtures::toy_1d()
        .save(dir.path().join("toy.json"))
        .unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "command = \"solve\"\ninput = \"toy.json\"\nout = \"from-config.json\"\n[tolerances]\ndedup = 1e-6\n",
    )
    .unwrap();
    let o = bin(dir.path(), &["--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-config.json").exists());

    std::fs::write(dir.path().join("bad.toml"), "max_cels = 3\n").unwrap();
    let o = bin(dir.path(), &["--config", "bad.toml", "verify"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("max_cels"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_catches_a_wrong_dual() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["verify"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(
        stdout(&o).contains("LP cutset: 1 scenario; full cutset: 2 scenarios"),
        "{}",
        stdout(&o)
    );

    let o = bin(dir.path(), &["verify", "--inject-fault", "wrong-dual"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL duality audit"), "{}", stdout(&o));
    assert!(stderr(&o).contains("duality audit"));
}
