use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn chemotaxsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemotaxsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![config.to_str().unwrap(), "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    chemotaxsim(&args)
}

fn homogeneous() -> PathBuf {
    configs_dir().join("homogeneous.conf")
}

#[test]
fn homogeneous_run_exits_zero_with_a_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&homogeneous(), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("t,mass_u,"));
    // t = 0, 0.1, ..., 1
    assert_eq!(rows.len(), 1 + 11);
    let audit = fs::read_to_string(dir.path().join("audit.txt")).unwrap();
    assert!(audit.starts_with("status = completed"));
    assert!(!audit.contains("FAIL"));
    let manifest = fs::read_to_string(dir.path().join("manifest")).unwrap();
    for key in ["config_sha256", "seed", "build", "wall_clock_seconds", "exit_code = 0"] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }
}

#[test]
fn rerun_gives_byte_identical_diagnostics() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_config(&homogeneous(), a.path(), &[]).status.code(), Some(0));
    assert_eq!(run_config(&homogeneous(), b.path(), &[]).status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("diagnostics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn audit_of_corrupted_mass_column_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_config(&homogeneous(), dir.path(), &[]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[5].split(',').map(String::from).collect();
    let mass: f64 = cells[1].parse().unwrap();
    cells[1] = format!("{:e}", mass * (1.0 + 1e-6));
    lines[5] = cells.join(",");
    fs::write(dir.path().join("bad.csv"), lines.join("\n") + "\n").unwrap();
    fs::write(dir.path().join("audit.conf"), "mode = audit\naudit.input = bad.csv\n").unwrap();

    let out_dir = dir.path().join("audit_out");
    let out = run_config(&dir.path().join("audit.conf"), &out_dir, &[]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(out_dir.join("audit.txt")).unwrap();
    assert!(report.contains("FAIL mass"), "{report}");
}

#[test]
fn missing_grid_block_exits_three_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(homogeneous()).unwrap();
    let stripped: String = text
        .lines()
        .filter(|l| !l.starts_with("grid."))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.path().join("nogrid.conf");
    fs::write(&path, stripped).unwrap();
    let out = run_config(&path, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
    assert!(!dir.path().join("out").exists(), "config errors must not write outputs");
}

#[test]
fn unreadable_config_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&dir.path().join("absent.conf"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn dry_run_lists_the_sweep_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run_config(&configs_dir().join("sweep.conf"), &out_dir, &["--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("planned runs = 9"), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("run m = ")).count(), 9);
    assert!(!out_dir.exists());
}

#[test]
fn sweep_table_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("sweep.conf"))
        .unwrap()
        .replace("scheme.t_end = 10", "scheme.t_end = 0.2")
        .replace("scheme.sample_every = 0.5", "scheme.sample_every = 0.1")
        .replace("grid.cells = 32", "grid.cells = 12");
    let path = dir.path().join("short.conf");
    fs::write(&path, text).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_config(&path, &a, &["--jobs", "1"]).status.code(), Some(0));
    assert_eq!(run_config(&path, &b, &["--jobs", "3"]).status.code(), Some(0));
    let table = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(table.lines().count(), 1 + 9);
    assert!(a.join("runs/m_2.5_trial_2/diagnostics.csv").exists());
}

#[test]
fn ladder_mode_writes_table_summary_and_rungs() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("ladder.conf"))
        .unwrap()
        .replace("grid.cells = 32", "grid.cells = 8")
        .replace("scheme.t_end = 2", "scheme.t_end = 0.2")
        .replace("scheme.sample_every = 0.1", "scheme.sample_every = 0.05");
    let path = dir.path().join("ladder.conf");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = run_config(&path, &out_dir, &[]);
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("ladder.csv")).unwrap();
    assert!(table.starts_with("eps,status,d_to_next,e_to_next,"));
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(fs::read_to_string(out_dir.join("ladder_summary.txt"))
        .unwrap()
        .contains("cauchy_consistent"));
    assert!(out_dir.join("ladder/eps_0.0125/u_0000.chf").exists());
}

#[test]
fn zero_jobs_is_rejected_by_the_parser() {
    let out = chemotaxsim(&[homogeneous().to_str().unwrap(), "--jobs", "0", "--dry-run"]);
    assert_ne!(out.status.code(), Some(0));
}
