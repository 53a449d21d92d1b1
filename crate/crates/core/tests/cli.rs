use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gaussflow::flow::FLOW_TRACE_HEADER;
use gaussflow::io::{parse_csv, read_radial_snapshot, read_support_snapshot};
use gaussflow::normalized::NORMALIZED_TRACE_HEADER;
use gaussflow::reference::ORACLE_HEADER;

fn gaussflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussflow"))
        .args(args)
        .arg("--output_dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_owned(), v.to_owned())
        })
        .collect()
}

fn lookup<'a>(m: &'a [(String, String)], key: &str) -> &'a str {
    &m.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("{key} missing")).1
}

fn header(dir: &Path) -> String {
    fs::read_to_string(dir.join("trace.csv")).unwrap().lines().next().unwrap().to_owned()
}

#[test]
fn oracle_circle_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussflow(&["oracle", "--initial", "ball:1", "--samples", "21"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = parse_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(h.join(","), ORACLE_HEADER);
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!((r[1] - (1.0 - 2.0 * r[0]).max(0.0).sqrt()).abs() < 1e-12, "{r:?}");
    }
    assert_eq!(rows[20], vec![0.5, 0.0]);
    let plot = fs::read_to_string(dir.path().join("plot.gp")).unwrap();
    assert!(plot.contains("'trace.csv'"));
}

#[test]
fn flow_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussflow(&["flow", "--initial", "ellipse:1:0.8", "--N", "64", "--trace_every", "50"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "manifest.txt", "snapshot.txt", "plot.gp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(header(dir.path()), FLOW_TRACE_HEADER);
    let m = manifest(dir.path());
    assert_eq!(m[0].0, "gaussflow.version");
    assert_eq!(lookup(&m, "config.initial"), "ellipse:1:0.8");
    let t_star: f64 = lookup(&m, "result.t_star").parse().unwrap();
    // area / 2π for the curve-shortening flow
    assert!((t_star - 0.4).abs() < 2e-3, "{t_star}");
    let snap = read_support_snapshot(&dir.path().join("snapshot.txt")).unwrap();
    assert_eq!(snap.len(), 64);
}

#[test]
fn flow_stops_at_t_max_and_resumes_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = gaussflow(&["flow", "--initial", "ball:1", "--N", "64", "--t_max", "0.2"], &first);
    assert!(out.status.success());
    let m = manifest(&first);
    assert_eq!(lookup(&m, "result.stopped_at"), "t_max");
    let snapshot = format!("file:{}", first.join("snapshot.txt").display());
    let second = dir.path().join("second");
    let out = gaussflow(&["flow", "--initial", &snapshot, "--N", "64"], &second);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t_star: f64 = lookup(&manifest(&second), "result.t_star").parse().unwrap();
    assert!((t_star - 0.3).abs() < 1e-3, "{t_star}");
}

#[test]
fn normalized_ellipse_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussflow(
        &["normalized", "--initial", "ellipse:2:1", "--N", "128", "--trace_every", "100"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(dir.path()), NORMALIZED_TRACE_HEADER);
    let m = manifest(dir.path());
    assert_eq!(lookup(&m, "result.converged"), "true");
    let roundness: f64 = lookup(&m, "result.roundness").parse().unwrap();
    assert!(roundness < 1e-3);
    assert_eq!(lookup(&m, "entropy.c_fit").parse::<f64>().unwrap(), 0.0);

    let out = Command::new(env!("CARGO_BIN_EXE_gaussflow"))
        .args(["report", "--input"])
        .arg(dir.path().join("trace.csv"))
        .arg("--output_dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("report.kind=normalized"));
    assert!(report.contains("report.decay_slope_plus="));
}

#[test]
fn entropy_and_project_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussflow(&["entropy", "--initial", "translated_ball:1:0.3", "--alpha", "3"], dir.path());
    assert!(out.status.success());
    let (h, rows) = parse_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(h.join(","), "alpha,entropy,z_1,z_2,entropy_normalized");
    assert!((rows[0][2] - 0.3).abs() < 1e-9 && rows[0][1].abs() < 1e-10);

    let proj = dir.path().join("proj");
    let out = gaussflow(&["project", "--kappa", "-1", "--initial", "ellipse:0.6:0.4", "--N", "128"], &proj);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&proj), "angle,r,rho,k_direct,k_via_projection");
    let g = read_radial_snapshot(&proj.join("radial.txt")).unwrap();
    assert_eq!(g.ambient().token(), "hyperbolic");
    let gap: f64 = lookup(&manifest(&proj), "result.curvature_route_gap").parse().unwrap();
    assert!(gap < 1e-4);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["flow", "--initial", "random:0.6", "--seed", "42", "--N", "64", "--kappa", "1"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gaussflow(&args, &a).status.success());
    assert!(gaussflow(&args, &b).status.success());
    for f in ["trace.csv", "snapshot.txt", "plot.gp"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| fs::read_to_string(p.join("manifest.txt")).unwrap().replace(&p.display().to_string(), "");
    assert_eq!(strip(&a), strip(&b));
    let other = dir.path().join("c");
    let mut seeded = args;
    seeded[4] = "43";
    assert!(gaussflow(&seeded, &other).status.success());
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(other.join("trace.csv")).unwrap());
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| gaussflow(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["flow", "--alpha", "0"]), 2);
    assert_eq!(code(&["flow", "--kappa", "-1", "--initial", "ball:1.5"]), 2);
    assert_eq!(code(&["flow", "--initial", "ellipse:1:0.5", "--N", "64", "--cfl_safety", "50"]), 3);
    assert_eq!(code(&["flow", "--initial", "ball:1", "--max_steps", "10"]), 5);
    assert_eq!(code(&["dance"]), 2);

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nkappa=1 n=1 alpha=1.0 N=256 initial=ball:0.5\nwobble=2\n").unwrap();
    let out = gaussflow(&["oracle", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("wobble"), "{err}");
}
