use std::process::{Command, Output};

fn trapbrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapbrw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn constants_prints_csv_and_succeeds() {
    let o = trapbrw(&["constants", "--p", "0.7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,seed,spec_hash,code_version,n,statistic,value,std_error,note")
    );
    assert!(lines.any(|l| l.contains(",k,") || l.contains("k_dp")));
}

#[test]
fn usage_errors_exit_with_two() {
    let cases: [&[&str]; 5] = [
        &["constants", "--set", "no_such_key=1"],
        &["constants", "--p", "1.5"],
        &["constants", "--k3", "5"],
        &["brw-sim", "--mode", "sideways"],
        &["dp-survival", "--env", "/nonexistent/env.brwt"],
    ];
    for args in cases {
        let o = trapbrw(args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(trapbrw(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\nseed = 5\nL = 30\nn = 10\nreplicas = 50\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = trapbrw(&["brw-sim", "--config", cfg]);
    let flagged = trapbrw(&["brw-sim", "--config", cfg, "--seed", "6"]);
    let direct = trapbrw(&[
        "brw-sim",
        "--seed",
        "6",
        "--L",
        "30",
        "--n",
        "10",
        "--replicas",
        "50",
    ]);
    assert_eq!(from_file.status.code(), Some(0));
    assert!(stdout(&from_file).lines().nth(1).unwrap().contains(",5,"));
    assert_eq!(stdout(&flagged), stdout(&direct));
    assert_ne!(stdout(&flagged), stdout(&from_file));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "brw-sim",
        "--seed",
        "9",
        "--L",
        "40",
        "--n",
        "12",
        "--replicas",
        "200",
        "--mode",
        "count",
    ];
    let a = trapbrw(&args);
    let b = trapbrw(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn environment_file_roundtrip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("e.brwt");
    let env = env.to_str().unwrap();
    assert_eq!(
        trapbrw(&["gen-env", "--L", "40", "--seed", "3", "--env", env])
            .status
            .code(),
        Some(0)
    );
    let loaded = trapbrw(&["dp-survival", "--env", env, "--n", "20"]);
    let generated = trapbrw(&["dp-survival", "--L", "40", "--seed", "3", "--n", "20"]);
    assert_eq!(loaded.status.code(), Some(0));
    let values = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(4).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(values(&loaded), values(&generated));
}

#[test]
fn scaled_verify_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = trapbrw(&["verify", "--scale", "0.01", "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    for f in [
        "report.csv",
        "results.csv",
        "lln_series.csv",
        "clearing_scaling.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(
        report.starts_with("seed,spec_hash,code_version,group,check,passed,value,threshold,detail")
    );
    assert_eq!(
        report
            .lines()
            .skip(1)
            .all(|l| l.split(',').nth(5) == Some("true")),
        o.status.code() == Some(0)
    );
}
