use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kinklab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn kinklab")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("kinklab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--set", "grid.half_width=30",
    "--set", "evolve.t_end=1",
    "--set", "perturbation.kind=random_bump",
];

#[test]
fn constants_prints_kink_integrals() {
    let o = run(&["constants"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.trim_start().starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((value("m ") - 8.0).abs() < 1e-9);
    assert!((value("i1") - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    assert!((value("i2") - std::f64::consts::PI.powi(3) / 2.0).abs() < 1e-8);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["simulate", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim().lines().count(), 1, "{}", stderr(&o));
}

#[test]
fn unknown_key_and_subcommand_are_usage_errors() {
    for args in [
        &["simulate", "--set", "grid.dy=0.1"][..],
        &["sweep", "--set", "run.eps"][..],
        &["frobnicate"][..],
        &["simulate", "--set", "evolve.dt=1"][..],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr(&o).trim().lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_passes_with_count_summary() {
    let o = run(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    let (a, b) = last.split_once(" checks").unwrap().0.split_once('/').unwrap();
    assert_eq!(a, b);
    assert!(!text.contains("FAIL"));
}

#[test]
fn print_config_is_complete_and_reparses() {
    let dir = scratch("print");
    let cfg = dir.join("in.cfg");
    std::fs::write(&cfg, "# test\ngrid.dx = 0.04\nrun.eps = 0.05\nevolve.t_end = 20\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "run.eps=0.2", "--set", "evolve.t_end=5", "--print-config"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for (k, _) in kinklab_cli::config::KEYS {
        assert!(text.lines().any(|l| l.starts_with(&format!("{k} = "))), "missing {k}");
    }
    assert!(text.contains("grid.dx = 0.04\n"));
    assert!(text.contains("run.eps = 0.2\n"));

    let resolved = dir.join("resolved.cfg");
    std::fs::write(&resolved, &text).unwrap();
    let again = run(&["simulate", "--config", resolved.to_str().unwrap(), "--print-config"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn simulate_is_deterministic_and_writes_outputs() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    for d in [&a, &b] {
        let mut args = vec!["simulate", "--quiet", "--out", d.to_str().unwrap()];
        args.extend_from_slice(SMALL);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ca = std::fs::read(a.join("run.csv")).unwrap();
    let cb = std::fs::read(b.join("run.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("t,xi,u,v_h1,w_l2,L,E,N1,N2,xi_dot_res,u_dot_res,xi_gap,u_gap,energy,momentum,newton_iters\n"));
    assert_eq!(text.lines().count(), 1 + 11);

    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["version"], kinklab_cli::VERSION);
    assert_eq!(summary["config"]["grid.half_width"], 30);
    assert_eq!(summary["left_window"], false);
    assert!(summary["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(summary["summary"]["sup_norm2"].as_f64().unwrap() > 0.0);
}

#[test]
fn ode_compare_writes_report() {
    let d = scratch("ode");
    let o = run(&["ode-compare", "--quiet", "--out", d.to_str().unwrap(), "--set", "run.eps=0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("ode_compare.json")).unwrap()).unwrap();
    let cap = v["gronwall"]["injection"].as_f64().unwrap();
    assert!((cap - 0.2f64.powf(0.75)).abs() < 1e-12);
    assert!(v["gronwall"]["gaps"]["max_u_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(v["exact_vs_corrected"]["samples"].as_array().unwrap().len(), 101);
}

#[test]
fn sweep_reports_checks_and_respects_thread_cap() {
    let d = scratch("sweep");
    let o = bin()
        .args(["sweep", "--quiet", "--out", d.to_str().unwrap(), "--set", "sweep.eps=0.4,0.3,0.25", "--set", "grid.half_width=40"])
        .env("KINKLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("sweep.json")).unwrap()).unwrap();
    let entries = v["result"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(v["result"]["checks"].as_array().unwrap().len(), 4);
    let pass = v["result"]["pass"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if pass { 0 } else { 1 }));
}

#[test]
fn dispatch_library_entry_point() {
    assert_eq!(kinklab_cli::parse_and_dispatch(["constants", "--quiet"]), 0);
    assert_eq!(kinklab_cli::parse_and_dispatch(["simulate", "--set", "nope=1"]), 2);
    assert_eq!(kinklab_cli::parse_and_dispatch(["--version"]), 0);
}
