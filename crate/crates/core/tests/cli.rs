use std::fs;
use std::path::Path;
use std::process::Command;

use sparsecode::io::{read_matrix, TRACE_HEADER};

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sparsecode"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn self_comparison_has_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path(), "d.scmx");
    let (code, _, err) = run(&[
        "gen-dict", "--n", "8", "--m", "8", "--seed", "0", "--out", &d,
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, out, _) = run(&["eval", "--dict", &d, "--ref", &d]);
    assert_eq!(code, 0);
    assert!(out.contains("\"delta\": 0.0"), "{out}");
}

#[test]
fn oracle_learn_from_truth_gives_zero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path(), "d.scmx");
    let f = p(dir.path(), "f.scmx");
    let t = p(dir.path(), "t.csv");
    assert_eq!(
        run(&[
            "gen-dict",
            "--n",
            "8",
            "--m",
            "8",
            "--kind",
            "orthonormal",
            "--out",
            &d
        ])
        .0,
        0
    );
    let (code, _, err) = run(&[
        "learn",
        "--truth",
        &d,
        "--init",
        &d,
        "--k",
        "2",
        "--rule",
        "simple",
        "--mode",
        "oracle",
        "--iterations",
        "4",
        "--out",
        &f,
        "--trace",
        &t,
    ]);
    assert_eq!(code, 0, "{err}");
    let trace = fs::read_to_string(&t).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], TRACE_HEADER);
    assert_eq!(lines.len(), 6);
    for l in &lines[1..] {
        let fields: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(
            fields[1] < 1e-14 && fields[2] < 1e-14 && fields[4] < 1e-14,
            "{l}"
        );
    }
    assert_eq!(read_matrix(Path::new(&f)).unwrap().cols(), 8);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["bogus"]).0, 1);
    assert_eq!(run(&["gen-dict", "--n", "8"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    let (code, _, err) = run(&[
        "eval",
        "--dict",
        "/nonexistent/a",
        "--ref",
        "/nonexistent/b",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("error"));
    let (code, _, _) = run(&[
        "gen-dict",
        "--n",
        "2",
        "--m",
        "4",
        "--kind",
        "orthonormal",
        "--out",
        "/tmp/x.scmx",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn samples_perturb_and_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path(), "d.scmx");
    let y = p(dir.path(), "y.csv");
    let a = p(dir.path(), "a.scmx");
    assert_eq!(
        run(&[
            "gen-dict",
            "--n",
            "16",
            "--m",
            "16",
            "--kind",
            "orthonormal",
            "--out",
            &d
        ])
        .0,
        0
    );
    assert_eq!(
        run(&[
            "gen-samples",
            "--dict",
            &d,
            "--k",
            "2",
            "--p",
            "50",
            "--out",
            &y
        ])
        .0,
        0
    );
    let text = fs::read_to_string(&y).unwrap();
    assert!(text.starts_with("16,50\n"));
    assert_eq!(
        run(&["perturb", "--dict", &d, "--delta", "0.1", "--out", &a]).0,
        0
    );
    let (code, out, _) = run(&["diagnose", "--truth", &d, "--dict", &a, "--k", "2"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 17);
    assert!(out.starts_with("column,error,slack"));
}

#[test]
fn init_from_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path(), "d.scmx");
    let y = p(dir.path(), "y.scmx");
    let o = p(dir.path(), "o.scmx");
    assert_eq!(
        run(&[
            "gen-dict",
            "--n",
            "12",
            "--m",
            "6",
            "--kind",
            "orthonormal",
            "--out",
            &d
        ])
        .0,
        0
    );
    assert_eq!(
        run(&[
            "gen-samples",
            "--dict",
            &d,
            "--k",
            "1",
            "--p",
            "2000",
            "--out",
            &y
        ])
        .0,
        0
    );
    let (code, out, err) = run(&[
        "init",
        "--samples",
        &y,
        "--m",
        "6",
        "--k",
        "1",
        "--p1",
        "200",
        "--out",
        &o,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("accepted 6 atoms"));
    let (code, out, _) = run(&["eval", "--dict", &o, "--ref", &d, "--delta-target", "1e-8"]);
    assert_eq!(code, 0);
    assert!(out.contains("\"is_near\": true"), "{out}");
}

const CONFIG: &str = "\
# small orthonormal run
n = 32
m = 32
k = 2
dictionary = orthonormal
init = perturb
init_delta = 0.1
rule = simple
mode = empirical
iterations = 6
p_per_iter = 4000
seed = 5
";

#[test]
fn experiment_is_deterministic() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let cfg = d.path().join("run.cfg");
        fs::write(
            &cfg,
            format!("{CONFIG}out_dir = {}\n", d.path().join("out").display()),
        )
        .unwrap();
        let (code, out, err) = run(&["experiment", "--config", &cfg.display().to_string()]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("\"delta\""));
    }
    let t1 = fs::read(d1.path().join("out/trace.csv")).unwrap();
    let t2 = fs::read(d2.path().join("out/trace.csv")).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(String::from_utf8(t1).unwrap().lines().count(), 8);
}

#[test]
fn experiment_rejects_unknown_keys() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "n = 4\nm = 4\nk = 1\nwhatever = 3\n").unwrap();
    let (code, _, err) = run(&["experiment", "--config", &cfg.display().to_string()]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown key"));
}
