use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conj-atlas"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .expect("binary runs");
    status.code().expect("exit code")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn flat_solve_has_one_solution_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = configs().join("flat_solve.toml");
    assert_eq!(run("solve", &cfg, &a, &["--workers", "1"]), 0);
    assert_eq!(run("solve", &cfg, &b, &["--workers", "1"]), 0);
    let csv = read(&a.join("solutions.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("index,converged,residual_norm"));
    let row: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    // Columns u1, u2 hold the initial momentum, which is the displacement.
    assert!((row[6] - 1.0).abs() < 1e-9 && (row[7] - 2.0).abs() < 1e-9);
    assert_eq!(row[4], 0.0);
    assert_eq!(csv, read(&b.join("solutions.csv")));

    let manifest: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["artifacts"][0], "solutions.csv");
}

#[test]
fn sphere_locus_is_a_single_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("locus", &configs().join("sphere_locus.toml"), &out, &["--emit-svg"]), 0);
    let csv = read(&out.join("locus.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "s,t_star,X1,X2,X3,m,cusp_flag");
    let r = 1.0 / std::f64::consts::PI;
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - 1.0).abs() < 1e-4);
        assert!((v[2] - r).abs() < 1e-4 && v[3].abs() < 1e-4 && v[4].abs() < 1e-4);
        assert_eq!(v[5], 1.0);
        rows += 1;
    }
    assert!(rows >= 64);
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("locus.json"))).unwrap();
    assert!(summary["spread"].as_f64().unwrap() <= 1e-4);
    let svg = read(&out.join("locus.svg"));
    assert!(svg.starts_with("<svg") && svg.contains("viewBox"));
}

#[test]
fn broken_symmetry_reports_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("symmetry-check", &configs().join("broken_symmetry.toml"), &out, &[]), 1);
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("symmetry.json"))).unwrap();
    assert_eq!(report["pass"], false);
    let violations = report["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    assert!(report["max_invariance_defect"].as_f64().unwrap() > 1e-4);
    assert!(violations.iter().all(|v| v["kind"] == "invariance" && v["value"].as_f64().unwrap() > v["tol"].as_f64().unwrap()));
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["exit_code"], 1);
}

#[test]
fn intact_symmetry_passes_with_the_degeneracy_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("symmetry-check", &configs().join("two_scaling_check.toml"), &out, &[]), 0);
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("symmetry.json"))).unwrap();
    assert!(report["max_invariance_defect"].as_f64().unwrap() <= 1e-9);
    let records = report["obstruction"]["records"].as_array().unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r["degeneracy"].as_u64().unwrap() <= r["bound"].as_u64().unwrap()));
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nkind = \"flat\"\ndim = 2\nwobble = 1\n");
    let out = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));

    let cfg = write_config(tmp.path(), "[model]\nkind = \"flat\"\ndim = 2\n");
    let out = bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[boundary]"));

    let cfg = write_config(
        tmp.path(),
        "[model]\nkind = \"flat\"\ndim = 2\n[boundary]\nkind = \"dirichlet\"\nstart = [0.0]\nend = [1.0, 2.0]\n[shooting]\n",
    );
    let out = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary.start"));
}

#[test]
fn numerical_failure_exits_three_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model]
kind = "gaussian"
dim = 2
bumps = [{ amplitude = 1.0, sigma = 1.0, center = [0.0, 0.0] }]
[integrator]
step = 0.5
newton_max_iter = 1
[boundary]
kind = "dirichlet"
start = [-3.0, 0.0]
end = [3.0, 0.0]
[shooting]
starts = 2
max_iter = 2
"#,
    );
    let out = tmp.path().join("o");
    assert_eq!(run("solve", &cfg, &out, &[]), 3);
    let diag: serde_json::Value = serde_json::from_str(&read(&out.join("diagnostics.json"))).unwrap();
    assert_eq!(diag["exit_code"], 3);
    assert!(diag["error"].as_str().unwrap().contains("numerical failure"));
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 4
[model]
kind = "gaussian"
dim = 2
bumps = [{ amplitude = 1.0, sigma = 1.0, center = [0.0, 0.0] }]
[integrator]
step = 2e-2
[boundary]
kind = "dirichlet"
start = [-3.0, 0.0]
end = [3.0, 0.0]
[shooting]
center = [5.0, 0.0]
radius = 4.0
starts = 8
[sweep]
axes = [[3.0, 3.0, 1], [-0.2, 0.2, 5]]
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("sweep", &cfg, &a, &["--workers", "1"]), 0);
    assert_eq!(run("sweep", &cfg, &b, &["--workers", "2"]), 0);
    for f in ["sweep.csv", "sweep_solutions.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)));
    }
    assert!(read(&a.join("sweep.csv")).starts_with("cell,mu1,mu2,count,fold,min_sigma_ratio,error\n"));
}
