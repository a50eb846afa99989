use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../examples").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barrier-synth")).current_dir(dir).args(args).output().expect("spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn floats(row: &[String]) -> Vec<f64> {
    row.iter().map(|v| v.parse().unwrap()).collect()
}

fn ex1_certificate(dir: &Path) -> PathBuf {
    let out = run(dir, &["synth", example("ex1.json").to_str().unwrap(), "--lambda", "-1", "--deg", "2..2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("certificate.json")
}

/// Rewrites every barrier polynomial in a certificate file.
fn edit_barrier(src: &Path, dst: &Path, edit: impl Fn(&str) -> String) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    for b in v["barriers"].as_array_mut().unwrap() {
        let p = b["polynomial"].as_str().unwrap().to_string();
        b["polynomial"] = serde_json::Value::String(edit(&p));
    }
    std::fs::write(dst, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn synth_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cert = ex1_certificate(dir.path());
    assert!(cert.exists());
    assert!(dir.path().join("certificate.report.json").exists());
    assert!(dir.path().join("certificate.manifest.json").exists());
    let ex1 = example("ex1.json");
    let out = run(dir.path(), &["synth", ex1.to_str().unwrap(), "--lambda", "0", "--deg", "2..3", "-o", "none.json"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("none.json").exists());
    assert_eq!(code(&run(dir.path(), &["synth", "missing.json"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", ex1.to_str().unwrap(), "--deg", "4..2"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", ex1.to_str().unwrap(), "--lambda", "abc"])), 2);
}

#[test]
fn synth_is_deterministic_under_seed() {
    let dir = TempDir::new().unwrap();
    let ex1 = example("ex1.json");
    for name in ["a.json", "b.json"] {
        let out = run(
            dir.path(),
            &["synth", ex1.to_str().unwrap(), "--lambda", "-1,-0.5", "--deg", "2..3", "--seed", "5", "-o", name],
        );
        assert_eq!(code(&out), 0);
    }
    assert_eq!(std::fs::read(dir.path().join("a.json")).unwrap(), std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cert = ex1_certificate(dir.path());
    let ex1 = example("ex1.json");
    let out = run(dir.path(), &["check", ex1.to_str().unwrap(), cert.to_str().unwrap(), "--report", "r.json"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"]["pass"], true);

    let bad = dir.path().join("bad.json");
    edit_barrier(&cert, &bad, |p| format!("{p} + 5"));
    let out = run(dir.path(), &["check", ex1.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).starts_with("fail"));

    let out = run(dir.path(), &["check", example("ex2.json").to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn falsify_finds_nothing_on_a_verified_certificate() {
    let dir = TempDir::new().unwrap();
    let cert = ex1_certificate(dir.path());
    let ex1 = example("ex1.json");
    let one = run(dir.path(), &["falsify", ex1.to_str().unwrap(), cert.to_str().unwrap(), "--samples", "100000"]);
    assert_eq!(code(&one), 0, "{}", stdout(&one));
    // chunked seeding makes the result independent of the thread count
    let three = run(
        dir.path(),
        &["falsify", ex1.to_str().unwrap(), cert.to_str().unwrap(), "--samples", "100000", "--jobs", "3"],
    );
    assert_eq!(stdout(&one), stdout(&three));

    let bad = dir.path().join("bad.json");
    edit_barrier(&cert, &bad, |p| format!("-({p})"));
    let out = run(dir.path(), &["falsify", ex1.to_str().unwrap(), bad.to_str().unwrap(), "--samples", "1000"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("init:1: violation"));
}

fn in_init(x: f64, y: f64) -> bool {
    (x - 1.5).powi(2) + y * y <= 0.25
}

fn in_unsafe(x: f64, y: f64) -> bool {
    (x + 1.0).powi(2) + (y + 1.0).powi(2) <= 0.16
}

#[test]
fn levelset_separates_initial_and_unsafe_sets() {
    let dir = TempDir::new().unwrap();
    let cert = ex1_certificate(dir.path());
    let ex1 = example("ex1.json");
    let out = run(
        dir.path(),
        &["levelset", ex1.to_str().unwrap(), cert.to_str().unwrap(), "--box", "-4:4", "--grid", "400x400", "-o", "ex1"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = csv_rows(&dir.path().join("ex1.grid.csv"));
    assert_eq!(grid.len(), 401 * 401);
    let (mut init_nodes, mut unsafe_nodes) = (0, 0);
    for row in &grid {
        let v = floats(row);
        if in_init(v[0], v[1]) {
            init_nodes += 1;
            assert!(v[2] <= 0.0, "{v:?}");
        }
        if in_unsafe(v[0], v[1]) {
            unsafe_nodes += 1;
            assert!(v[2] > 0.0, "{v:?}");
        }
    }
    assert!(init_nodes > 100 && unsafe_nodes > 100);
    let contour = csv_rows(&dir.path().join("ex1.contour.csv"));
    assert!(!contour.is_empty());
    for row in &contour {
        let v = floats(&row[1..]);
        let (mx, my) = ((v[0] + v[2]) / 2.0, (v[1] + v[3]) / 2.0);
        assert!(!in_init(mx, my) && !in_unsafe(mx, my));
    }
}

#[test]
fn constant_barrier_has_no_contour() {
    let dir = TempDir::new().unwrap();
    let cert = ex1_certificate(dir.path());
    let one = dir.path().join("one.json");
    edit_barrier(&cert, &one, |_| "1".into());
    let out =
        run(dir.path(), &["levelset", example("ex1.json").to_str().unwrap(), one.to_str().unwrap(), "-o", "flat"]);
    assert_eq!(code(&out), 0);
    assert!(csv_rows(&dir.path().join("flat.contour.csv")).is_empty());
    let out = run(
        dir.path(),
        &["levelset", example("ex1.json").to_str().unwrap(), one.to_str().unwrap(), "--grid", "1001x1000"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn example2_slice_and_simulation() {
    let dir = TempDir::new().unwrap();
    let ex2 = example("ex2.json");
    let out = run(
        dir.path(),
        &["synth", ex2.to_str().unwrap(), "--lambda", "-1/5", "--deg", "4..4", "--gamma", "0=1,1=1", "-o", "c2.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(
        dir.path(),
        &[
            "levelset",
            ex2.to_str().unwrap(),
            "c2.json",
            "--mode",
            "2",
            "--axes",
            "x1,x2",
            "--fix",
            "x3=0",
            "--box",
            "-10:10",
            "--grid",
            "400x400",
            "-o",
            "phi2",
        ],
    );
    assert_eq!(code(&out), 0);
    for row in csv_rows(&dir.path().join("phi2.contour.csv")) {
        let v = floats(&row[1..]);
        for x in [v[0], v[2]] {
            assert!(!(3.2..=10.0).contains(&x.abs()), "contour reaches the unsafe band at x1 = {x}");
        }
    }

    let out = run(
        dir.path(),
        &[
            "simulate",
            ex2.to_str().unwrap(),
            "--from",
            "1:(0.05,0,0)",
            "--T",
            "30",
            "--policy",
            "eager",
            "--certificate",
            "c2.json",
            "-o",
            "sim.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("sim.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "x1", "x2", "x3", "location", "phi"]);
    let rows: Vec<Vec<String>> = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    let mut locations: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    locations.dedup();
    assert!(locations.len() >= 3, "{locations:?}");
    assert!(locations.windows(2).all(|w| w[0] != w[1]));
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() <= 1e-6));
    assert_eq!(code(&run(dir.path(), &["simulate", ex2.to_str().unwrap(), "--from", "3:(0,0,0)"])), 2);
}

#[test]
fn sweep_writes_the_full_table() {
    let dir = TempDir::new().unwrap();
    let ex1 = example("ex1.json");
    let out = run(
        dir.path(),
        &["sweep", ex1.to_str().unwrap(), "--lambda", "0,-0.125,-0.25,-1", "--deg", "2..10", "--jobs", "4"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 36);
    let verified = |d: &str, l: &str| rows.iter().any(|r| r[0] == d && r[1] == l && r[2] == "verified");
    for d in 2..=6 {
        assert!(verified(&d.to_string(), "-1"), "d{d}");
    }
    assert!(!verified("2", "0") && !verified("3", "0") && verified("4", "0"));
    for l in ["-0.125", "-0.25"] {
        for d in 4..=6 {
            assert!(verified(&d.to_string(), l), "d{d} {l}");
        }
    }
    assert_eq!(stdout(&out).lines().count(), 10);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    ex1_certificate(dir.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let out = run(dir.path(), &["replay", "certificate.manifest.json"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("identical: certificate.json"));
}
