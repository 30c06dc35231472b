use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("experiment.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_helm-mono"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("HELM_MONO_THREADS")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .to_string()
}

fn csv_values(text: &str) -> Vec<f64> {
    text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn eigs_top_value_matches_wavenumber() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eigs"], "mesh.n = 32\nk = 1\neigs.count = 4\n", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let vals = csv_values(&read(dir.path(), "eigenvalues.csv"));
    assert_eq!(vals.len(), 4);
    assert!((vals[0] - 1.0).abs() < 1e-3);
    let manifest = read(dir.path(), "manifest.txt");
    assert_eq!(kv(&manifest, "command"), "eigs");
    assert!(manifest.contains("mesh.n = 32"));
}

#[test]
fn identity_check_equal_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mesh.n = 8\nq.background = 1.3\nq.inclusion.a = 0.25,0.5,0.25,0.5,2\nseed = 3\n";
    let out = run(&["identity-check"], cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let residual: f64 = kv(&read(dir.path(), "identity.txt"), "residual").parse().unwrap();
    assert!(residual.abs() <= 1e-12);
}

#[test]
fn identity_check_distinct_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mesh.n = 8\nq2.background = 1.5\nq2.inclusion.a = 0,0.5,0,0.5,0.7\n";
    let out = run(&["identity-check"], cfg, dir.path());
    assert!(out.status.success());
    let text = read(dir.path(), "identity.txt");
    let residual: f64 = kv(&text, "residual").parse().unwrap();
    let lhs: f64 = kv(&text, "lhs").parse().unwrap();
    assert!(residual <= 1e-9 && lhs != 0.0);
}

const NO_SCATTERER: &str = "mesh.n = 32\nk = 1\nbasis.kind = panels\nbasis.panels = 64\n\
grid.nx = 4\ngrid.ny = 4\nalpha.policy = fixed\nalpha.value = 1\n";

#[test]
fn reconstruct_without_scatterer_rejects_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["reconstruct"], NO_SCATTERER, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pgm = read(dir.path(), "mask.pgm");
    let mut lines = pgm.lines();
    assert_eq!(lines.next(), Some("P2"));
    assert_eq!(lines.next(), Some("4 4"));
    assert_eq!(lines.next(), Some("255"));
    let pixels: Vec<&str> = lines.flat_map(|l| l.split_whitespace()).collect();
    assert_eq!(pixels.len(), 16);
    assert!(pixels.iter().all(|&p| p == "0"));
    assert_eq!(read(dir.path(), "reconstruction.csv").lines().count(), 17);
}

#[test]
fn reconstruct_is_deterministic_across_thread_counts() {
    let cfg = "mesh.n = 32\nbasis.kind = panels\nbasis.panels = 64\nq.inclusion.d = 0.375,0.625,0.375,0.625,2\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["--threads", "1", "reconstruct"], cfg, a.path()).status.success());
    assert!(run(&["--threads", "3", "reconstruct"], cfg, b.path()).status.success());
    for name in ["reconstruction.csv", "mask.pgm", "reconstruction.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert!(read(a.path(), "mask.pgm").contains("255"));
    assert_eq!(kv(&read(a.path(), "manifest.txt"), "threads"), "1");
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "mesh.n = 4\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_helm-mono"))
        .args(["mesh", "--out"])
        .arg(dir.path().join("out"))
        .arg("--config")
        .arg(&cfg)
        .env("HELM_MONO_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(kv(&read(dir.path(), "manifest.txt"), "threads"), "2");
    let mesh = read(dir.path(), "mesh.txt");
    assert!(mesh.starts_with("vertices 25\n"));
}

#[test]
fn config_errors_exit_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eigs"], "mesh.n = 8\nk = fast\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("'k'"), "{err}");

    let out = run(&["eigs"], "mesh.n = 8\nbogus.key = 1\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resonance_exits_three() {
    // q ≡ 0 makes the system matrix the pure stiffness matrix, singular on constants.
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ntd"], "mesh.n = 8\nq.background = 0\n", dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ambiguity_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dq"], "mesh.n = 8\nq.background = 0\n", dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn precondition_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["monotonicity-check"], "mesh.n = 8\nq.background = 2\nq2.background = 1\n", dir.path());
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn monotonicity_check_accepts_ordered_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mesh.n = 16\nq2.inclusion.bump = 0.375,0.625,0.375,0.625,1.5\n";
    let out = run(&["monotonicity-check"], cfg, dir.path());
    assert!(out.status.success());
    let text = read(dir.path(), "monotonicity.txt");
    assert_eq!(kv(&text, "verdict"), "accepted");
    assert_eq!(kv(&text, "d_allowed"), "1");
}

#[test]
fn dq_reports_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dq"], "mesh.n = 16\nk = 4\n", dir.path());
    assert!(out.status.success());
    let text = read(dir.path(), "dq.txt");
    assert_eq!(kv(&text, "d_of_q"), "3");
    assert_eq!(kv(&text, "count_k_eigs_above_one"), "3");
}

#[test]
fn resonance_scan_brackets_agree_with_eigs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mesh.n = 16\nscan.k_min = 2.5\nscan.k_max = 4\nscan.steps = 16\n";
    let out = run(&["resonance-scan"], cfg, dir.path());
    assert!(out.status.success());
    let brackets = read(dir.path(), "brackets.csv");
    let first: Vec<f64> = brackets.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    let (lo, hi, crossings) = (first[0], first[1], first[2]);
    assert!(lo < std::f64::consts::PI && std::f64::consts::PI < hi + 0.1);
    assert_eq!(crossings, 2.0);

    // Two eigenvalues (the (1,0) and (0,1) modes) change sign between the bracket ends.
    let positives = |k: f64| {
        let d = tempfile::tempdir().unwrap();
        let o = run(&["eigs"], &format!("mesh.n = 16\nk = {k}\neigs.count = 4\n"), d.path());
        assert!(o.status.success());
        csv_values(&read(d.path(), "eigenvalues.csv")).iter().filter(|&&v| v > 0.0).count()
    };
    assert_eq!(positives(lo), 1);
    assert_eq!(positives(hi), 3);
}

#[test]
fn localize_writes_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mesh.n = 16\nsigma.sides = bottom\nbasis.kind = panels\nbasis.panels = 8\n\
localize.b = 0,0.25,0.75,1\nlocalize.d = 0.5,1,0,1\nlocalize.v = random\nlocalize.v_dim = 3\nseed = 5\n";
    let out = run(&["localize"], cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ratio: f64 = kv(&read(dir.path(), "localize.txt"), "ratio").parse().unwrap();
    assert!(ratio.is_finite() && ratio > 0.0);
    assert_eq!(read(dir.path(), "potential.csv").lines().count(), 8);
}

#[test]
fn ntd_round_trips_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ntd", "--dump-matrices"], "mesh.n = 4\n", dir.path());
    assert!(out.status.success());
    let op = helm_mono::io::read_symop(read(dir.path(), "ntd.csv").as_bytes()).unwrap();
    assert_eq!(op.dim(), 16);
    assert!(read(dir.path(), "stiffness.csv").starts_with("row,col,value\n"));
}
