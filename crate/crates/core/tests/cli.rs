use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use degenopt::io::{read_weight_csv, write_weight_csv};

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenopt"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// `key = value` lines of a report file.
fn report_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.trim_start().strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
        .trim()
        .to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn solve_zero_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.ini", "[mesh]\nnx = 4\n[problem]\nf = 0\n");
    let o = run(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(csv_column(&dir.path().join("state.csv"), "value").iter().all(|&v| v == 0.0));
    let gap: f64 = report_value(&dir.path().join("solve_report.txt"), "energy_gap").parse().unwrap();
    assert_eq!(gap, 0.0);
    assert!(dir.path().join("state.vtk").exists());
}

#[test]
fn solve_mms_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(repo_path("configs/mms_dirichlet.ini")).unwrap();
    let mut errors = Vec::new();
    for n in [16, 32] {
        let text = base.replace("nx = 16", &format!("nx = {n}"));
        let cfg = write_config(dir.path(), &format!("mms{n}.ini"), &text);
        let out = dir.path().join(format!("out{n}"));
        let o = run(&cfg, &out, &["solve"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let e: f64 = report_value(&out.join("solve_report.txt"), "l2_error").parse().unwrap();
        errors.push(e);
    }
    assert!(errors[0] / errors[1] >= 3.6, "{errors:?}");
}

#[test]
fn missing_config_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ini");
    let o = run(&missing, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.ini"), "{}", stderr(&o));
}

#[test]
fn bad_expression_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.ini", "[problem]\nf = 3x\n");
    let o = run(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("3x"), "{}", stderr(&o));
}

#[test]
fn optimize_zero_data_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&repo_path("configs/zero_data.ini"), dir.path(), &["optimize"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = dir.path().join("optimize_report.txt");
    let iterations: usize = report_value(&report, "iterations").parse().unwrap();
    assert!(iterations <= 1);
    assert_eq!(report_value(&report, "converged"), "true");
}

#[test]
fn optimize_reference_descends() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&repo_path("configs/reference.ini"), dir.path(), &["optimize"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let total = csv_column(&dir.path().join("trace.csv"), "total");
    assert!(total.windows(2).all(|w| w[1] <= w[0]));
    assert!(total.last() < total.first());
    for f in ["rho.csv", "state.csv", "tau_report.txt", "optimum.vtk", "manifest.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(report_value(&dir.path().join("tau_report.txt"), "bounded"), "true");
    let rho = read_weight_csv(&dir.path().join("rho.csv")).unwrap();
    assert_eq!(rho.len(), 128);
    let vtk = fs::read_to_string(dir.path().join("optimum.vtk")).unwrap();
    assert!(vtk.contains("SCALARS y double") && vtk.contains("SCALARS p double"));
    assert!(vtk.contains("SCALARS rho double"));
}

#[test]
fn optimize_infeasible_mass_names_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "inf.ini",
        "[mesh]\nnx = 4\n[admissible]\nxi1 = 0.1\nxi2 = 2\nmass = 5\n",
    );
    let o = run(&cfg, dir.path(), &["optimize"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("m <= sum(area * xi2) violated"), "{}", stderr(&o));
}

#[test]
fn optimize_stall_exits_3() {
    // The reference instance at the default smoothing 1e-6 * mean(xi2) is
    // too stiff for the line search to resolve.
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(repo_path("configs/reference.ini")).unwrap();
    let text: String = text
        .lines()
        .filter(|l| !l.starts_with("tv_eps"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = write_config(dir.path(), "stiff.ini", &text);
    let o = run(&cfg, dir.path(), &["optimize"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("stalled"));
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn gradcheck_passes_on_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&repo_path("configs/gradcheck.ini"), dir.path(), &["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err: f64 = report_value(&dir.path().join("gradcheck_report.txt"), "max_relative_error")
        .parse()
        .unwrap();
    assert!(err <= 1e-5, "{err}");
}

#[test]
fn gradcheck_corrupted_gradient_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &repo_path("configs/gradcheck.ini"),
        dir.path(),
        &["gradcheck", "--corrupt-gradient"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at cell 0"), "{}", stderr(&o));
}

#[test]
fn gradcheck_size_guard() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(repo_path("configs/gradcheck.ini"))
        .unwrap()
        .replace("nx = 4", "nx = 64");
    let cfg = write_config(dir.path(), "big.ini", &text);
    let o = run(&cfg, dir.path(), &["gradcheck"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("64x64"), "{}", stderr(&o));
}

#[test]
fn diagnose_one_over_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.ini", "[mesh]\nnx = 4\n");
    let o = run(&cfg, dir.path(), &["diagnose", "one_over_k:K=1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l1 = csv_column(&dir.path().join("inverse_weight.csv"), "l1_distance");
    assert_eq!(l1.len(), 1000);
    assert!(*l1.last().unwrap() <= 1e-3);
    assert!(dir.path().join("lsc.csv").exists());
}

#[test]
fn diagnose_constant_family_has_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.ini", "[mesh]\nnx = 3\n");
    let o = run(&cfg, dir.path(), &["diagnose", "constant:K=5,c=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l1 = csv_column(&dir.path().join("inverse_weight.csv"), "l1_distance");
    assert!(l1.iter().all(|&d| d == 0.0));
}

#[test]
fn diagnose_directory_and_mismatched_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.ini", "[mesh]\nnx = 1\n");
    let seq = dir.path().join("seq");
    write_weight_csv(&seq.join("k001.csv"), &[1.5, 0.5]).unwrap();
    write_weight_csv(&seq.join("k002.csv"), &[1.25, 0.75]).unwrap();
    write_weight_csv(&seq.join("limit.csv"), &[1.0, 1.0]).unwrap();
    let out = dir.path().join("ok");
    let o = run(&cfg, &out, &["diagnose", seq.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(csv_column(&out.join("inverse_weight.csv"), "k").len(), 2);

    write_weight_csv(&seq.join("k003.csv"), &[1.0, 1.0, 1.0]).unwrap();
    let o = run(&cfg, &dir.path().join("bad"), &["diagnose", seq.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("k003.csv"), "{}", stderr(&o));
}

#[test]
fn diagnose_unreadable_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.ini", "[mesh]\nnx = 2\n");
    for spec in ["nonsense", "one_over_k", "one_over_k:K=abc", "one_over_k:K=0"] {
        let o = run(&cfg, dir.path(), &["diagnose", spec]);
        assert_eq!(o.status.code(), Some(1), "{spec}");
    }
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = run(&cfg, dir.path(), &["diagnose", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn project_from_expression_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_path("configs/projection.ini");
    let o = run(&cfg, dir.path(), &["project"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rho = read_weight_csv(&dir.path().join("projected.csv")).unwrap();
    let mass: f64 = rho.iter().map(|r| r / 32.0).sum();
    assert!((mass - 0.8).abs() < 1e-12);
    assert!(rho.iter().all(|&r| (0.2..=1.5).contains(&r)));

    // Projecting the projection changes nothing.
    let again = dir.path().join("again");
    let o = run(
        &cfg,
        &again,
        &["project", "--input", dir.path().join("projected.csv").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rho2 = read_weight_csv(&again.join("projected.csv")).unwrap();
    for (a, b) in rho.iter().zip(&rho2) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn mesh_info_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_path("configs/mms_mixed.ini");
    let o = run(&cfg, dir.path(), &["mesh-info"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("triangles       512"), "{stdout}");
    let manifest = dir.path().join("manifest.txt");
    assert_eq!(report_value(&manifest, "command"), "mesh-info");
    assert_eq!(report_value(&manifest, "config_sha256").len(), 64);
    assert!(report_value(&manifest, "version").starts_with("degenopt "));
    let wall: f64 = report_value(&manifest, "wall_time_seconds").parse().unwrap();
    assert!(wall >= 0.0);
}

#[test]
fn seed_flag_changes_gradcheck_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_path("configs/gradcheck.ini");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&cfg, &a, &["--seed", "11", "gradcheck"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &["--seed", "12", "gradcheck"]).status.code(), Some(0));
    assert_eq!(report_value(&a.join("manifest.txt"), "seed"), "11");
    assert_ne!(
        fs::read(a.join("gradcheck_report.txt")).unwrap(),
        fs::read(b.join("gradcheck_report.txt")).unwrap()
    );
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_degenopt"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
