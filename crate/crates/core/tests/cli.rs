use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_overfit-lab"));
    c.env_remove("OVERFIT_LAB_THREADS");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

struct Files {
    _dir: TempDir,
    iso: String,
    pl: String,
    exp: String,
    pl_target: String,
    root: PathBuf,
}

fn files() -> Files {
    let dir = TempDir::new().unwrap();
    let s = |p: PathBuf| p.to_str().unwrap().to_string();
    Files {
        iso: s(write(
            dir.path(),
            "iso.json",
            r#"{"family":"isotropic","d":200}"#,
        )),
        pl: s(write(
            dir.path(),
            "pl.json",
            r#"{"family":"power_law","alpha":2.0}"#,
        )),
        exp: s(write(dir.path(), "exp.json", r#"{"family":"exponential"}"#)),
        pl_target: s(write(
            dir.path(),
            "t.json",
            r#"{"coeffs_family":{"power":2,"count":50},"sigma2":1.0}"#,
        )),
        root: dir.path().to_path_buf(),
        _dir: dir,
    }
}

#[test]
fn analyze_isotropic() {
    let f = files();
    let out = run(&["analyze", "--spectrum", &f.iso, "--n", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["kappa0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["e0"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((v["cost"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn taxonomy_power_law_is_tempered() {
    let f = files();
    let v = json(&run(&["taxonomy", "--spectrum", &f.pl]));
    assert_eq!(v["verdict"], "tempered");
    assert!((v["limit_estimate"].as_f64().unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn exponential_sweep_has_increasing_e0() {
    let f = files();
    let out_path = f.root.join("e.csv");
    let out = run(&[
        "sweep",
        "--spectrum",
        &f.exp,
        "--n",
        "10:1000:log",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,kappa0,e0,cost,bound_thm2,bound_thm7,verdict")
    );
    let e0: Vec<f64> = lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            assert_eq!(cells.len(), 7);
            assert_eq!(cells[6], "catastrophic");
            cells[2].parse().unwrap()
        })
        .collect();
    assert!(e0.len() > 10);
    assert!(e0.windows(2).all(|w| w[0] < w[1]), "{e0:?}");
}

#[test]
fn csv_numbers_have_at_most_twelve_significant_digits() {
    let f = files();
    let out = run(&["sweep", "--spectrum", &f.pl, "--n", "10,100"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1).take(5).filter(|c| !c.is_empty()) {
            let mantissa = cell.split('e').next().unwrap();
            let digits = mantissa
                .trim_start_matches(['-', '0', '.'])
                .replace('.', "");
            assert!(digits.len() <= 12, "{cell}");
        }
    }
}

#[test]
fn tune_and_bounds_and_poly_emit_json() {
    let f = files();
    let v = json(&run(&[
        "tune",
        "--spectrum",
        &f.pl,
        "--target",
        &f.pl_target,
        "--n",
        "100",
    ]));
    assert!(v["cost"].as_f64().unwrap() <= v["e0"].as_f64().unwrap());
    assert_eq!(v["delta_star_infinite"], false);

    let v = json(&run(&["bounds", "--spectrum", &f.pl, "--n", "100"]));
    let e0 = v["e0_actual"].as_f64().unwrap();
    for entry in v["entries"].as_array().unwrap() {
        let value = entry["value"].as_f64().unwrap();
        match entry["kind"].as_str().unwrap() {
            "upper" => assert!(value >= e0),
            _ => assert!(value <= e0),
        }
    }
    assert_eq!(v["entries"].as_array().unwrap().len(), 5);

    let v = json(&run(&[
        "poly",
        "--d",
        "30",
        "--mu",
        "1,1,1,1",
        "--n",
        "164",
        "--degree-energy",
        "0,1,0.3",
    ]));
    assert_eq!(v["k_signal"], 31);
    assert_eq!(v["r_k_lower"], 435.0);
    assert!((v["plateau_risk"].as_f64().unwrap() - 1.3).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let f = files();
    // too few positive eigenvalues for interpolation
    let out = run(&["analyze", "--spectrum", &f.iso, "--n", "300"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "degenerate_interpolation");

    let out = run(&["poly", "--d", "30", "--mu", "1,1,1", "--n", "31"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["analyze", "--spectrum", "/nonexistent.json", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["analyze", "--spectrum", &f.iso]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schema_errors_report_pointers() {
    let f = files();
    let bad = write(
        &f.root,
        "bad.json",
        r#"{"family":"blocks","blocks":[[0.5,10],[0.1,"x"]]}"#,
    );
    let out = run(&["bounds", "--spectrum", bad.to_str().unwrap(), "--n", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "schema");
    assert_eq!(err["pointer"], "/blocks/1/1");

    let bad_t = write(&f.root, "bad_t.json", r#"{"coeffs":[1,2],"sigma":1}"#);
    let out = run(&[
        "tune",
        "--spectrum",
        &f.pl,
        "--target",
        bad_t.to_str().unwrap(),
        "--n",
        "5",
    ]);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["pointer"], "/sigma");
}

#[test]
fn validate_is_byte_identical_across_runs_and_thread_caps() {
    let f = files();
    let args = [
        "validate",
        "--spectrum",
        &f.pl,
        "--target",
        &f.pl_target,
        "--n",
        "40",
        "--deltas",
        "0,auto",
        "--trials",
        "24",
        "--seed",
        "7",
    ];
    let a = bin()
        .args(args)
        .env("OVERFIT_LAB_THREADS", "1")
        .output()
        .unwrap();
    let b = bin()
        .args(args)
        .env("OVERFIT_LAB_THREADS", "3")
        .output()
        .unwrap();
    let c = bin().args(args).output().unwrap();
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let v = json(&a);
    let deltas: Vec<f64> = v["per_delta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["delta"].as_f64().unwrap())
        .collect();
    assert_eq!(deltas.len(), 2);
    assert_eq!(deltas[0], 0.0);
    assert!(deltas[1] > 0.0);

    let bad = bin()
        .args(args)
        .env("OVERFIT_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_output_is_deterministic() {
    let f = files();
    let a = run(&["sweep", "--spectrum", &f.pl, "--n", "10:200:log:6"]);
    let b = run(&["sweep", "--spectrum", &f.pl, "--n", "10:200:log:6"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}
