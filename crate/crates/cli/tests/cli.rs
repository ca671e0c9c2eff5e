use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ogfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ogfm"))
        .args(args)
        .env_remove("OGFM_THREADS")
        .output()
        .unwrap()
}

fn inputs(dir: &Path) {
    let mut x = String::new();
    let mut y = String::new();
    for i in 0..24 {
        let a = ((i * 7) % 11) as f64 / 5.0 - 1.0;
        let b = ((i * 5) % 13) as f64 / 6.0 - 1.0;
        x.push_str(&format!("{a},{b}\n"));
        let e = ((i * 3) % 7) as f64 / 20.0;
        y.push_str(&format!("{},{},{}\n", a + e, a - b, 0.5 * b - e));
    }
    fs::write(dir.join("x.csv"), format!("x1,x2\n{x}")).unwrap();
    fs::write(dir.join("y.txt"), y.replace(',', " ")).unwrap();
    fs::write(dir.join("groups.txt"), "# two blocks\nlevel:1 outcomes:1,2\nlevel:1 outcomes:3\n").unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_writes_coefficients_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    inputs(dir.path());
    let out = dir.path().join("fit");
    let o = ogfm(&[
        "fit", "--x", s(&dir.path().join("x.csv")), "--y", s(&dir.path().join("y.txt")),
        "--groups", s(&dir.path().join("groups.txt")), "--lambda", "0.05", "--alpha", "0.1",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let coef = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let lines: Vec<&str> = coef.lines().collect();
    assert_eq!(lines[0], "variable,outcome_1,outcome_2,outcome_3");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("intercept,"));
    let summary = fs::read_to_string(out.join("fit_summary.txt")).unwrap();
    for key in ["objective:", "iterations:", "support_size:", "fused_pairs:"] {
        assert!(summary.contains(key), "{summary}");
    }
}

#[test]
fn cv_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    inputs(dir.path());
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = ogfm(&[
            "cv", "--x", s(&dir.path().join("x.csv")), "--y", s(&dir.path().join("y.txt")),
            "--nlambda", "5", "--alphas", "0,0.5", "--kfolds", "4", "--seed", "9",
            "--threads", threads, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("cv_table.csv")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "2"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 10);
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    inputs(dir.path());
    fs::write(dir.path().join("bad.csv"), "1,2\n3,oops\n").unwrap();
    let out = dir.path().join("out");
    let o = ogfm(&[
        "fit", "--x", s(&dir.path().join("bad.csv")), "--y", s(&dir.path().join("y.txt")),
        "--lambda", "1", "--out", s(&out),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("line 2") && err.contains("column 2"), "{err}");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);

    let o = ogfm(&["fit", "--x", s(&dir.path().join("x.csv")), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("--y"));
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    inputs(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_ogfm"))
        .args(["fit", "--x", s(&dir.path().join("x.csv")), "--y", s(&dir.path().join("y.txt")),
            "--lambda", "0.1", "--out", s(&dir.path().join("o"))])
        .env("OGFM_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
}
