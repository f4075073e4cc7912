use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn confcurve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confcurve"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SAMPLE: &str = "y\n1.2\n0.4\n2.2\n1.9\n0.8\n1.5\n1.1\n0.7\n";

#[test]
fn optimal_cd_sidecar_matches_published_median() {
    let dir = tempfile::tempdir().unwrap();
    let out = confcurve(
        &["optimal-cd", "--fixture", "lidocaine", "--draws", "20000", "--grid", "log:0.5:5:60", "--out", "o.csv"],
        dir.path(),
    );
    ok(&out);
    let side = json(&dir.path().join("o.json"));
    let median = side["point_estimate"].as_f64().unwrap();
    assert!((median - 1.732).abs() <= 0.03, "median {median}");
    assert_eq!(side["seed"], 1);
    assert!(side["monte_carlo"]["max_standard_error"].as_f64().unwrap() < 0.005);
    let csv = std::fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert!(csv.starts_with("# confcurve optimal-cd seed=1\nfocus,cd,cc\n"));
    assert_eq!(csv.lines().count(), 62);
}

#[test]
fn fused_study_cds_track_the_exact_optimal_curve() {
    let dir = tempfile::tempdir().unwrap();
    ok(&confcurve(&["reproduce", "table1-study-cds", "--out-dir", "t"], dir.path()));
    let manifest = dir.path().join("t/lidocaine-studies.json");
    assert_eq!(json(&manifest)["sources"].as_array().unwrap().len(), 6);
    ok(&confcurve(
        &["fuse", "--manifest", "t/lidocaine-studies.json", "--grid", "log:0.5:5:120", "--out", "f.csv"],
        dir.path(),
    ));
    ok(&confcurve(
        &["optimal-cd", "--fixture", "lidocaine", "--exact", "--grid", "log:0.5:5:120", "--out", "o.csv"],
        dir.path(),
    ));
    let cc = |name: &str| -> Vec<f64> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(2)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect()
    };
    let (a, b) = (cc("f.csv"), cc("o.csv"));
    assert_eq!(a.len(), b.len());
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 0.05, "sup gap {gap}");
}

#[test]
fn coverage_sim_reports_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = confcurve(
        &["coverage-sim", "--model", "exponential", "--reps", "100", "--out", "c.csv"],
        dir.path(),
    );
    ok(&out);
    let side = json(&dir.path().join("c.json"));
    let levels = side["details"]["report"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 4);
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn reproduce_writes_figure_curves() {
    let dir = tempfile::tempdir().unwrap();
    ok(&confcurve(&["reproduce", "fig2", "--out-dir", "f2", "--draws", "10000"], dir.path()));
    let curves = std::fs::read_dir(dir.path().join("f2"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert!(curves >= 7, "{curves} curves");
    let side = json(&dir.path().join("f2/fig2.json"));
    assert_eq!(side["checks"].as_array().unwrap().len(), 5);

    ok(&confcurve(&["reproduce", "fig4", "--out-dir", "f4"], dir.path()));
    for f in ["rho_mle.csv", "rho_bhhj.csv", "fig4.json"] {
        assert!(dir.path().join("f4").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_separate_configuration_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.txt", SAMPLE);
    let code = |args: &[&str]| confcurve(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["pivot-cd", "--input", "missing.txt"]), 4);
    assert_eq!(code(&["pivot-cd", "--input", "s.txt", "--model", "poisson"]), 2);
    assert_eq!(code(&["pivot-cd", "--input", "s.txt", "--param", "skew"]), 2);
    assert_eq!(code(&["optimal-cd", "--fixture", "nope"]), 2);
    write(dir.path(), "bad.txt", "y\n1.0\nabc\n");
    assert_eq!(code(&["quantile-cc", "--input", "bad.txt"]), 4);
    assert_eq!(code(&["reproduce", "fig3", "--out-dir", "f3", "--data", "absent.csv"]), 4);
    let err = confcurve(&["reproduce", "fig3", "--out-dir", "f3", "--data", "absent.csv"], dir.path());
    assert!(String::from_utf8_lossy(&err.stderr).contains("fetch_demography.py"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        ok(&confcurve(
            &["optimal-cd", "--fixture", "lidocaine", "--draws", "10000", "--grid", "log:0.5:5:20", "--seed", "7", "--out", name],
            dir.path(),
        ));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_commands_report_intervals() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.txt", SAMPLE);
    for cmd in ["pivot-cd", "wilks-cc"] {
        let out = format!("{cmd}.csv");
        ok(&confcurve(&[cmd, "--input", "s.txt", "--out", &out], dir.path()));
        let side = json(&dir.path().join(format!("{cmd}.json")));
        let i90 = &side["intervals"]["0.90"][0];
        let i95 = &side["intervals"]["0.95"][0];
        assert!(i95[0].as_f64() < i90[0].as_f64() && i90[1].as_f64() < i95[1].as_f64());
        let est = side["point_estimate"].as_f64().unwrap();
        assert!((est - 1.225).abs() < 0.01, "{cmd}: {est}");
    }
    ok(&confcurve(&["quantile-cc", "--input", "s.txt", "--p", "0.5", "--out", "q.csv"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("q.csv")).unwrap();
    assert!(csv.lines().nth(1) == Some("p,focus,cc"));
}

#[test]
fn config_file_runs_the_named_command() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.txt", SAMPLE);
    write(
        dir.path(),
        "run.json",
        r#"{"command": "quantile-cc", "out": "q.csv", "options": {"input": "s.txt", "p": [0.25, 0.75]}}"#,
    );
    ok(&confcurve(&["run", "--config", "run.json"], dir.path()));
    let side = json(&dir.path().join("q.json"));
    assert_eq!(side["details"]["curves"].as_array().unwrap().len(), 2);

    write(dir.path(), "bad.json", r#"{"command": "quantile-cc", "colour": "red"}"#);
    assert_eq!(confcurve(&["run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
}
