use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coxint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxint")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a one-year scenario with a spike section and simulates it.
fn simulated(dir: &Path) -> PathBuf {
    let cfg = dir.join("scenario.json");
    fs::write(&cfg, r#"{"spike": {"beta": 0.5}, "run": {"t_hours": 8760, "seed": 3}}"#).unwrap();
    let out = dir.join("sim");
    let o = coxint(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulated(dir.path());
    let b_dir = tempfile::tempdir().unwrap();
    let b = simulated(b_dir.path());
    for f in ["path.csv", "events.csv", "prices.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let events = fs::read_to_string(a.join("events.csv")).unwrap();
    assert!(events.lines().count() > 50);
    assert!(events.starts_with("t\n"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulated(dir.path());
    let other = dir.path().join("other");
    let o = coxint(&["simulate", "--config", s(&dir.path().join("scenario.json")), "--out", s(&other), "--seed", "4"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("events.csv")).unwrap(), fs::read(other.join("events.csv")).unwrap());
}

#[test]
fn degenerate_scenario_has_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("z.json");
    fs::write(&cfg, r#"{"temperature": {"sigma": 0}, "intensity": {"kind": "constant", "c": 0}, "run": {"t_hours": 200}}"#)
        .unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&coxint(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap(), "t\n");
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"run": {"hours": 10}}"#).unwrap();
    assert_eq!(code(&coxint(&["simulate", "--config", s(&cfg), "--out", s(dir.path())])), 2);
    fs::write(&cfg, "{not json").unwrap();
    assert_eq!(code(&coxint(&["simulate", "--config", s(&cfg), "--out", s(dir.path())])), 2);
    assert_eq!(code(&coxint(&["simulate", "--config", "/nonexistent.json", "--out", s(dir.path())])), 2);
    assert_eq!(code(&coxint(&["frobnicate"])), 2);
}

#[test]
fn estimate_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = coxint(&[
            "estimate",
            "--path",
            s(&sim.join("path.csv")),
            "--events",
            s(&sim.join("events.csv")),
            "--interval=-1:29",
            "--grid",
            "arithmetic:0.5:11",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("e1"), run("e2"));
    for f in ["curve.csv", "selection.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    let h = summary["h_hat"].as_f64().unwrap();
    assert!(h >= summary["h_min"].as_f64().unwrap() && h <= 11.0);
    assert_eq!(summary["time_unit"].as_f64().unwrap(), 8760.0);
    let curve = fs::read_to_string(a.join("curve.csv")).unwrap();
    assert!(curve.starts_with("x,qhat,defined\n"));
    assert_eq!(curve.lines().count(), 513);
    assert!(fs::read_to_string(a.join("selection.csv")).unwrap().starts_with("h,criterion,vhat,penalty\n"));
}

#[test]
fn estimate_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path());
    let p = sim.join("path.csv");
    let e = sim.join("events.csv");
    let out = dir.path().join("x");
    let base = |extra: &[&str]| {
        let mut args = vec!["estimate", "--path", s(&p), "--events", s(&e), "--out", s(&out)];
        args.extend_from_slice(extra);
        code(&coxint(&args))
    };
    assert_eq!(base(&[]), 2, "missing interval");
    assert_eq!(base(&["--interval", "5"]), 2);
    assert_eq!(base(&["--interval=29:-1"]), 2);
    assert_eq!(base(&["--interval=-1:29", "--alpha", "0"]), 2);
    assert_eq!(base(&["--interval=-1:29", "--grid", "geometric"]), 2);
    assert_eq!(base(&["--interval=-1:29", "--kernel", "gauss"]), 2);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t\n0.5\n0.1\n").unwrap();
    let o = coxint(&["estimate", "--path", s(&p), "--events", s(&bad), "--interval=-1:29", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unobserved_interval_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path());
    let o = coxint(&[
        "estimate",
        "--path",
        s(&sim.join("path.csv")),
        "--events",
        s(&sim.join("events.csv")),
        "--interval=200:260",
        "--hmin-count",
        "200",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn test_command_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path());
    let (p, e) = (sim.join("path.csv"), sim.join("events.csv"));
    let run = |extra: &[&str]| {
        let mut args = vec!["test", "--path", s(&p), "--events", s(&e), "--interval=-1:29", "--h", "4"];
        args.extend_from_slice(extra);
        coxint(&args)
    };
    let exp = run(&["--family", "exp"]);
    let report: serde_json::Value = serde_json::from_slice(&exp.stdout).unwrap();
    let keys: Vec<&str> = report.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for k in ["theta_hat", "contrast_value", "statistic", "variance_estimate", "critical_value", "p_value", "reject", "level"] {
        assert!(keys.contains(&k), "{k}");
    }
    let rejected = report["reject"].as_bool().unwrap();
    assert_eq!(code(&exp), if rejected { 3 } else { 0 });
    assert_eq!(code(&run(&["--family", "const"])), 3);
    assert_eq!(code(&run(&["--family", "exp", "--gamma", "1"])), 3);
    assert_eq!(code(&run(&["--family", "exp", "--gamma", "0"])), 2);
    assert_eq!(code(&run(&["--family", "weibull"])), 2);
    assert_eq!(code(&run(&["--family", "plugin"])), 2);

    let plugin = dir.path().join("plugin.json");
    fs::write(&plugin, r#"{"form": "log_polynomial", "lower": [5, -0.5], "upper": [9, 0.1]}"#).unwrap();
    let o = run(&["--family", "plugin", "--plugin", s(&plugin)]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(&plugin, r#"{"form": "log_polynomial", "lower": [5], "upper": [9], "extra": 1}"#).unwrap();
    assert_eq!(code(&run(&["--family", "plugin", "--plugin", s(&plugin)])), 2);
}

#[test]
fn detect_command() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulated(dir.path());
    let out = dir.path().join("jumps.csv");
    let o = coxint(&["detect", "--prices", s(&sim.join("prices.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let found = fs::read_to_string(&out).unwrap().lines().count() - 1;
    let truth = fs::read_to_string(sim.join("events.csv")).unwrap().lines().count() - 1;
    assert!(found > truth / 2 && found <= truth + 10, "{found} of {truth}");

    let flat = dir.path().join("flat.csv");
    fs::write(&flat, (0..100).fold("t,x\n".to_string(), |acc, i| acc + &format!("{i},3.5\n"))).unwrap();
    let o = coxint(&["detect", "--prices", s(&flat)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "t\n");

    let uneven = dir.path().join("uneven.csv");
    fs::write(&uneven, "t,x\n0,1\n1,2\n3,1\n4,2\n").unwrap();
    let o = coxint(&["detect", "--prices", s(&uneven)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uniform"));
}

#[test]
fn mc_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.json");
    fs::write(&cfg, r#"{"experiment": {"grid": {"step": 1.0}}, "run": {"seed": 9}}"#).unwrap();
    let table = dir.path().join("table.csv");
    let details = dir.path().join("details.csv");
    let o = coxint(&["mc", "--config", s(&cfg), "--reps", "1", "--out", s(&table), "--details", s(&details)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "interval,e_hat,e_oracle,pct_converged,pct_exponential,pct_constant,a0_lo,a0_hi,a1_lo,a1_hi");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("-1:29,"));
    // one replication has no confidence interval
    assert!(lines[1].ends_with(",,,,"), "{}", lines[1]);
    assert_eq!(fs::read_to_string(&details).unwrap().lines().count(), 4);

    let again = dir.path().join("again.csv");
    assert_eq!(code(&coxint(&["mc", "--config", s(&cfg), "--reps", "1", "--out", s(&again)])), 0);
    assert_eq!(fs::read(&table).unwrap(), fs::read(&again).unwrap());
    assert_eq!(code(&coxint(&["mc", "--reps", "0", "--out", s(&table)])), 2);
}

#[test]
fn info_command() {
    let o = coxint(&["info", "--kernel", "epanechnikov", "--degree", "1", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["inner_constant"].as_f64().unwrap() - 413113.0 / 985600.0).abs() < 1e-5);
    assert_eq!(v["moment_matrix"].as_array().unwrap().len(), 2);
    let o = coxint(&["info", "--degree", "0"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("identically 1"));
    assert_eq!(code(&coxint(&["info", "--kernel", "gaussian"])), 2);
}

#[test]
fn threads_flag() {
    let o = coxint(&["--threads", "1", "info"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&coxint(&["--threads", "0", "info"])), 2);
}
