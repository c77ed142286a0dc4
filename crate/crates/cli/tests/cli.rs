use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn smte(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smte"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn smte")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn report_on_ten_machine_fault() {
    let dir = tempfile::tempdir().unwrap();
    let o = smte(
        &[
            "report",
            "--scenario",
            "ts10",
            "--fault-bus",
            "2",
            "--clearing-time",
            "0.26",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["integrator"], "rk4");
    assert!(r["superimposed"]["residual_smke"].as_f64().unwrap() > 0.0);
    assert_eq!(r["individual"].as_array().unwrap().len(), 10);
    assert!(dir.path().join("report.txt").is_file());
}

#[test]
fn negative_clearing_time_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = smte(
        &["simulate", "--scenario", "ts3", "--clearing-time", "-0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("clearing_time"));
}

#[test]
fn unknown_scenario_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = smte(&["simulate", "--scenario", "no-such-case"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cct_bracket_respects_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let o = smte(
        &["cct", "--scenario", "ts3", "--resolution", "0.01"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("cct.json"));
    let b = r["bracket"].as_array().unwrap();
    let (lo, hi) = (b[0].as_f64().unwrap(), b[1].as_f64().unwrap());
    assert!(lo < hi && hi - lo <= 0.01 + 1e-12);
    assert_eq!(r["cct"].as_f64().unwrap(), lo);
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn cct_does_not_depend_on_jobs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["cct", "--scenario", "ts3", "--resolution", "0.005"];
    let one = smte(&[&args[..], &["--jobs", "1"]].concat(), a.path());
    let four = smte(&[&args[..], &["--jobs", "4"]].concat(), b.path());
    assert!(one.status.success() && four.status.success());
    assert_eq!(
        std::fs::read(a.path().join("cct.json")).unwrap(),
        std::fs::read(b.path().join("cct.json")).unwrap()
    );
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cases: [(&[&str], &[&str]); 4] = [
        (&["simulate", "--scenario", "ts3"], &["trajectory.csv"]),
        (
            &["energy", "--scenario", "ts10"],
            &["energy.csv", "events.json", "conservation.json"],
        ),
        (&["equilibria", "--scenario", "ts3"], &["equilibria.json"]),
        (
            &["pes", "--scenario", "ts3", "--grid=-60:120:5,-60:120:5"],
            &["pes.csv"],
        ),
    ];
    for (args, files) in cases {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert!(smte(args, a.path()).status.success(), "{args:?}");
        assert!(smte(args, b.path()).status.success(), "{args:?}");
        for f in files {
            let (x, y) = (
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
            );
            assert!(!x.is_empty());
            assert_eq!(x, y, "{f} differs");
        }
    }
}

#[test]
fn every_artifact_declares_schema_and_settings() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(smte(&["simulate", "--scenario", "ts3"], p).status.success());
    assert!(smte(&["energy", "--scenario", "ts3"], p).status.success());
    assert!(smte(&["equilibria", "--scenario", "ts3"], p)
        .status
        .success());
    assert!(
        smte(&["pes", "--scenario", "ts3", "--grid=0:60:3,0:60:3"], p)
            .status
            .success()
    );
    for f in ["trajectory.csv", "energy.csv", "pes.csv"] {
        let first = std::fs::read_to_string(p.join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(
            first.starts_with("# smte") && first.contains("schema=1"),
            "{f}: {first}"
        );
    }
    let traj = std::fs::read_to_string(p.join("trajectory.csv")).unwrap();
    assert!(traj.lines().next().unwrap().contains("integrator=rk4"));
    for f in ["events.json", "conservation.json", "equilibria.json"] {
        let v = json(&p.join(f));
        assert_eq!(v["schema_version"], 1, "{f}");
        assert!(v["dt"].is_number(), "{f}");
    }
    let q = json(&p.join("equilibria.json"));
    assert!(q["uep"]["jacobian_signature"].as_u64().unwrap() >= 1);
}

#[test]
fn json_format_is_available_for_tabular_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = smte(
        &["energy", "--scenario", "ts3", "--format", "json"],
        dir.path(),
    );
    assert!(o.status.success());
    let v = json(&dir.path().join("energy.json"));
    assert_eq!(v["quadrature"], "trapezoid");
    assert!(v["energy"]["smte"].as_array().unwrap().len() > 10);
}

#[test]
fn margin_sources_both_run() {
    for src in ["sctp", "uep"] {
        let dir = tempfile::tempdir().unwrap();
        let o = smte(
            &[
                "report",
                "--scenario",
                "ts3",
                "--clearing-time",
                "0.2",
                "--margin",
                src,
            ],
            dir.path(),
        );
        assert!(
            o.status.success(),
            "{src}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let r = json(&dir.path().join("report.json"));
        let m = &r["superimposed"]["margin"];
        assert_eq!(m["source"].as_str().unwrap().to_lowercase(), src);
        assert!(m["eta"].is_number());
    }
}
