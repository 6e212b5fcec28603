//! End-to-end runs of the `lmem` binary.

use std::path::Path;
use std::process::{Command, Output};

fn lmem(args: &[&str], dir: &Path, env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lmem"));
    cmd.args(args).current_dir(dir).env_remove("LMEM_CACHE_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

#[test]
fn invalid_depth_is_a_validation_error_on_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "# depth below\n[params]\nd = -1\n");
    let out = lmem(&["retrieve", "--config", &cfg, "--out", "o"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:3:") && err.contains("positive"), "{err}");
}

#[test]
fn unparseable_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "[params]\nd = 10\n[grid]\nnz: 5\n");
    let out = lmem(&["store", "--config", &cfg], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:4:"));
}

#[test]
fn unknown_flag_value_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmem(&["figure", "8"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let out = lmem(&["--help"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn retrieve_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.cfg", "[params]\nd = 10\n[grid]\nnz = 101\nnt = 1001\n");
    let out = lmem(&["retrieve", "--config", &cfg, "--out", "o"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path().join("o/retrieve.csv"));
    assert_eq!(csv.lines().next(), Some("t,e_out_re,e_out_im"));
    assert_eq!(csv.lines().count(), 1002);
    let s = read(dir.path().join("o/retrieve.summary"));
    let eta: f64 = summary_value(&s, "eta").parse().unwrap();
    let kernel: f64 = summary_value(&s, "kernel_eta").parse().unwrap();
    assert!((eta - kernel).abs() < 2e-3, "{eta} vs {kernel}");
    assert_eq!(summary_value(&s, "tolerance_met"), "true");
}

#[test]
fn stored_wave_can_be_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", "[params]\nd = 10\n[control]\nshape = shaped\n[run]\nmethod = adiabatic\n");
    let out = lmem(&["store", "--config", &cfg, "--out", "s"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stored = read(dir.path().join("s/store.summary"));
    let cfg = write(
        dir.path(),
        "r.cfg",
        "[params]\nd = 10\n[spin]\nkind = file\npath = s/store.csv\n[run]\nmethod = adiabatic\ndirection = backward\n",
    );
    let out = lmem(&["retrieve", "--config", &cfg, "--out", "r"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // The file wave is renormalized, so retrieval sees total / storage.
    let total: f64 = summary_value(&stored, "total_backward").parse().unwrap();
    let eta_s: f64 = summary_value(&stored, "eta").parse().unwrap();
    let kernel: f64 = summary_value(&read(dir.path().join("r/retrieve.summary")), "kernel_eta").parse().unwrap();
    assert!((kernel - total / eta_s).abs() < 1e-6, "{kernel} vs {}", total / eta_s);
}

#[test]
fn figure_2_has_reference_column_and_acceptance_metric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.cfg", "[figure]\nd_list = 1, 100\n");
    let out = lmem(&["figure", "2", "--config", &cfg, "--out", "o", "--tolerance-profile", "fast"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path().join("o/figure_2.csv"));
    assert_eq!(csv.lines().next(), Some("z,s_d1_re,s_d1_im,s_d100_re,s_d100_im,sqrt3_z"));
    let s = read(dir.path().join("o/figure_2.summary"));
    assert!(summary_value(&s, "acceptance_metric").contains("sqrt(3) z"));
    summary_value(&s, "acceptance_met");
}

#[test]
fn output_does_not_depend_on_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "w.cfg",
        "[figure]\nd_list = 10\ntd_list = 3, 100\n[sweep]\ncommand = store-retrieve\nparam = delta\nvalues = 0, 20\n[control]\nshape = shaped\n[grid]\nnz = 101\nnt = 801\n",
    );
    for jobs in ["1", "4"] {
        let o = format!("o{jobs}");
        for args in [vec!["figure", "4a"], vec!["sweep"]] {
            let mut a = args.clone();
            a.extend(["--config", &cfg, "--out", &o, "--jobs", jobs]);
            let out = lmem(&a, dir.path(), &[]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for f in ["figure_4a.csv", "figure_4a.summary", "sweep.csv", "points/point_0001/store_retrieve.csv"] {
        assert_eq!(read(dir.path().join("o1").join(f)), read(dir.path().join("o4").join(f)), "{f}");
    }
    let sweep = read(dir.path().join("o1/sweep.csv"));
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.starts_with("delta,d,"));
}

#[test]
fn unmet_tolerance_exits_with_two_and_reports_the_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.cfg",
        "[params]\nd = 5\n[grid]\nnz = 51\nnt = 401\n[run]\nkind = time-reversal\nmax_iters = 1\ntol = 1e-14\n",
    );
    let out = lmem(&["optimize-mode", "--config", &cfg, "--out", "o"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did not converge") && err.contains("residual"), "{err}");
}

#[test]
fn shaping_beyond_the_cap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "[params]\nd = 10\n[control]\nomega_cap = 0.01\n");
    let out = lmem(&["shape-control", "--config", &cfg, "--out", "o"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kernel_cache_honours_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("kc");
    let cfg = write(dir.path(), "m.cfg", "[params]\nd = 7\n");
    let run = || lmem(&["optimize-mode", "--config", &cfg, "--out", "o"], dir.path(), &[("LMEM_CACHE_DIR", &cache)]);
    assert_eq!(run().status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(files.len(), 1);
    let first = read(dir.path().join("o/optimize_mode.csv"));
    assert_eq!(run().status.code(), Some(0));
    assert_eq!(read(dir.path().join("o/optimize_mode.csv")), first);
    assert!(!dir.path().join("o/.kernel-cache").exists());
}
