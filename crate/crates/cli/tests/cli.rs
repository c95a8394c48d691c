use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nnem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnem")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .parse()
        .unwrap()
}

fn drop_seconds(csv: &str) -> String {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "seconds");
    csv.lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            cells.iter().enumerate().filter(|(i, _)| Some(*i) != col).map(|(_, c)| *c).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn solve_writes_report_and_beats_fem() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[mesh]\nn = 2\n[train]\nsteps = 0\n");
    let out = tmp.path().join("run");
    let o = nnem(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report_value(&report, "loss") <= report_value(&report, "fem_loss") + 1e-12);
    assert!(out.join("history.csv").exists() && out.join("checkpoint.bin").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[train]\nlrr = 0.1\n");
    let o = nnem(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.lrr"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_bad_arguments_exit_2() {
    assert_eq!(nnem(&["solve", "--config", "/nonexistent/c.toml"]).status.code(), Some(2));
    assert_eq!(nnem(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let body = |steps: usize| format!("[mesh]\nn = 2\n[net]\nwidth = 6\n[train]\nsteps = {steps}\nlog_every = 1\nlr = 0.001\n");
    let c10 = config(tmp.path(), "c10.toml", &body(10));
    let c20 = config(tmp.path(), "c20.toml", &body(20));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let run = |cfg: &Path, out: &Path, resume: Option<&Path>| {
        let mut args = vec!["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        if let Some(r) = resume {
            args.extend(["--resume", r.to_str().unwrap()]);
        }
        let o = nnem(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run(&c10, &a, None);
    let ckpt = tmp.path().join("a10.bin");
    fs::copy(a.join("checkpoint.bin"), &ckpt).unwrap();
    run(&c20, &a, Some(&ckpt));
    run(&c20, &b, None);
    let ha = fs::read_to_string(a.join("history.csv")).unwrap();
    let hb = fs::read_to_string(b.join("history.csv")).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(ha.lines().count(), 22);
    assert_eq!(fs::read(a.join("checkpoint.bin")).unwrap(), fs::read(b.join("checkpoint.bin")).unwrap());
}

#[test]
fn resume_rejects_a_different_configuration() {
    let tmp = TempDir::new().unwrap();
    let c1 = config(tmp.path(), "c1.toml", "[mesh]\nn = 2\n[net]\nwidth = 4\n[train]\nsteps = 2\n");
    let c2 = config(tmp.path(), "c2.toml", "[mesh]\nn = 2\n[net]\nwidth = 4\n[train]\nsteps = 4\nlr = 0.01\n");
    let out = tmp.path().join("o");
    assert!(nnem(&["solve", "--config", c1.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let ckpt = out.join("checkpoint.bin");
    let o = nnem(&["solve", "--config", c2.to_str().unwrap(), "--out", out.to_str().unwrap(), "--resume", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn fem_study_has_one_row_per_size() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[study]\nmethods = [\"fem\"]\nsizes = [2, 4, 8, 16, 32]\n");
    let out = tmp.path().join("s");
    let o = nnem(&["study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("FEMP2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let orders: Vec<f64> = csv.lines().skip(2).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert!((orders.last().unwrap() - 2.0).abs() < 0.1, "{orders:?}");
    assert!(stdout(&o).contains("FEMP2_e_H1"));
    assert_eq!(fs::read_to_string(out.join("comparison.csv")).unwrap().lines().count(), 6);
}

#[test]
fn nnem_study_over_three_meshes() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "c.toml",
        "[net]\nwidth = 4\n[train]\nsteps = 3\n[study]\nmethods = [\"nnem\", \"fem\"]\nsizes = [2, 4, 8]\nnnem_sizes = [2, 4, 8]\n",
    );
    let out = tmp.path().join("s");
    let o = nnem(&["study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("NNEMP2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let t = nnem(&["table", out.join("NNEMP2.csv").to_str().unwrap(), out.join("FEMP2.csv").to_str().unwrap()]);
    assert!(t.status.success(), "{}", stderr(&t));
    let text = stdout(&t);
    assert!(text.contains("NNEMP2_e_H1") && text.contains("FEMP2_e_L2"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn empty_size_list_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[study]\nsizes = []\n");
    let o = nnem(&["study", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("study.sizes"), "{}", stderr(&o));
}

#[test]
fn table_rejects_a_foreign_csv() {
    let tmp = TempDir::new().unwrap();
    let p = config(tmp.path(), "x.csv", "a,b\n1,2\n");
    assert_eq!(nnem(&["table", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn check_passes_on_defaults() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "");
    let o = nnem(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches(": PASS").count(), 4);
}

#[test]
fn check_flags_a_sliver_mesh() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("sliver.mesh"),
        "nnem-mesh v1\nvertices 3\n0 0 1\n1 0 1\n0.5 0.004 1\ntriangles 1\n0 1 2\n",
    )
    .unwrap();
    let cfg = config(tmp.path(), "c.toml", "[mesh]\nkind = \"file\"\npath = \"sliver.mesh\"\n");
    let o = nnem(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("check mesh regularity: FAIL"), "{}", stdout(&o));
    assert!(stderr(&o).contains("mesh regularity"));
}

#[test]
fn check_flags_a_degenerate_mesh() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("flat.mesh"),
        "nnem-mesh v1\nvertices 3\n0 0 1\n1 0 1\n2 0 1\ntriangles 1\n0 1 2\n",
    )
    .unwrap();
    let cfg = config(tmp.path(), "c.toml", "[mesh]\nkind = \"file\"\npath = \"flat.mesh\"\n");
    let o = nnem(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("check mesh regularity: FAIL"));
}

#[test]
fn check_flags_a_one_point_rule() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[quad]\ntriangle_points = 1\n");
    let o = nnem(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("check quadrature exactness: FAIL"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "c.toml",
        "[net]\nwidth = 5\n[train]\nsteps = 6\nlog_every = 2\nseed = 7\n[study]\nmethods = [\"nnem\", \"fem\"]\nsizes = [2, 4]\nnnem_sizes = [2, 4]\n",
    );
    let runs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("r{i}"))).collect();
    for r in &runs {
        for cmd in ["solve", "study"] {
            let o = nnem(&[cmd, "--config", cfg.to_str().unwrap(), "--out", r.to_str().unwrap()]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
    let read = |r: &Path, f: &str| fs::read_to_string(r.join(f)).unwrap();
    assert_eq!(read(&runs[0], "history.csv"), read(&runs[1], "history.csv"));
    for f in ["NNEMP2.csv", "FEMP2.csv"] {
        assert_eq!(drop_seconds(&read(&runs[0], f)), drop_seconds(&read(&runs[1], f)), "{f}");
    }
    assert_eq!(read(&runs[0], "comparison.csv"), read(&runs[1], "comparison.csv"));
}

#[test]
fn seed_override_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", "[net]\nwidth = 4\n[train]\nsteps = 2\nlog_every = 1\n");
    let mut hist = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = nnem(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        hist.push(fs::read_to_string(out.join("history.csv")).unwrap());
    }
    assert_ne!(hist[0], hist[1]);
}
