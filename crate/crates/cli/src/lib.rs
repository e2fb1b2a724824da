//! Command-line front end for the kink laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use kinklab::harness::{threads_from_env, write_csv};
use kinklab::kink::kink_constants;
use kinklab::modulation::{corrected_trajectory, default_ode_dt, exact_trajectory, gronwall_compare, GronwallSpec};
use kinklab::{run_experiment, sweep, verify, KinkConstants};

use config::{ConfigError, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "kinklab", version, about = "Numerical laboratory for a forced sine-Gordon kink")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "kinklab-out")]
    pub out: PathBuf,
    /// Override a config key; repeatable, last one wins.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Only print errors and final verdicts.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One field run with diagnostics (run.csv, summary.json).
    Simulate,
    /// One run per eps in sweep.eps, with scaling checks (sweep.json).
    Sweep,
    /// Built-in self-checks.
    Verify,
    /// Modulation ODE comparisons (ode_compare.json).
    OdeCompare,
    /// Prints the kink constants.
    Constants,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write to '{path}': {reason}")]
    Output { path: String, reason: String },
    #[error("{0}")]
    Run(#[from] kinklab::Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Output { .. } => EXIT_USAGE,
            Self::Run(_) => EXIT_FAIL,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Output { path: path.display().to_string(), reason: e.to_string() }
}

struct Ctx {
    settings: Settings,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn out_file(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        Ok(self.out.join(name))
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let path = self.out_file(name)?;
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}

fn resolve(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut s = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    for kv in &cli.overrides {
        s.apply_override(kv)?;
    }
    Ok(s)
}

/// Parses `args` (without the program name), runs the subcommand and returns
/// the process exit code: 0 success, 1 a check or run failed, 2 usage or
/// configuration error.
pub fn parse_and_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("kinklab")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_USAGE
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let text = e.to_string();
                    eprintln!("{}", text.lines().next().unwrap_or("usage error"));
                    EXIT_USAGE
                }
            };
        }
    };
    let checked = resolve(&cli).and_then(|s| {
        match cli.command {
            Command::Simulate => s.validate_run(),
            Command::Sweep => s.validate_sweep(),
            Command::OdeCompare => s.validate_ode(),
            Command::Verify | Command::Constants => Ok(()),
        }
        .map(|_| s)
    });
    let settings = match checked {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if cli.print_config {
        print!("{}", settings.render());
        return EXIT_OK;
    }
    let ctx = Ctx { settings, out: cli.out.clone(), quiet: cli.quiet };
    let result = match cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Sweep => run_sweep(&ctx),
        Command::Verify => run_verify(&ctx),
        Command::OdeCompare => ode_compare(&ctx),
        Command::Constants => constants(&ctx),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn simulate(ctx: &Ctx) -> Result<i32, CliError> {
    let cfg = &ctx.settings.run;
    let start = Instant::now();
    let run = run_experiment(cfg);
    let wall = start.elapsed().as_secs_f64();
    let (summary, error) = match &run {
        Ok(r) => {
            let path = ctx.out_file("run.csv")?;
            let f = fs::File::create(&path).map_err(io_err(&path))?;
            write_csv(&r.records, BufWriter::new(f)).map_err(io_err(&path))?;
            (Some(r.summary()), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let exit_time = summary.as_ref().and_then(|s| s.exit);
    let ok = summary.as_ref().is_some_and(|s| s.exit.is_none() && s.window_ok);
    let doc = json!({
        "version": VERSION,
        "config": ctx.settings.to_json(),
        "summary": summary,
        "left_window": exit_time.is_some(),
        "exit_event": exit_time,
        "error": error,
        "wall_clock_seconds": wall,
    });
    let path = ctx.write_json("summary.json", &doc)?;
    if let Some(s) = &summary {
        ctx.say(format!(
            "t = {:.4} ({} records): sup norm2 {:.3e}, sup u_dot_res {:.3e}, sup xi_dot_res {:.3e}, sup xi_gap {:.3e}",
            s.t_reached, s.records, s.sup_norm2, s.sup_u_dot_res, s.sup_xi_dot_res, s.sup_xi_gap
        ));
        if let Some(ev) = s.exit {
            ctx.say(format!("left the window at t = {:.4} (u = {:.6}, bound {:.6})", ev.t, ev.u, ev.bound));
        }
    }
    ctx.say(format!("wrote {}", path.display()));
    if let Some(e) = error {
        eprintln!("error: {e}");
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}

fn run_sweep(ctx: &Ctx) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let start = Instant::now();
    let result = sweep(&s.run, &s.sweep_eps, threads_from_env())?;
    let wall = start.elapsed().as_secs_f64();
    for c in &result.checks {
        let fit = c.fit.map_or("n/a".to_string(), |f| format!("{:.3} ± {:.3}", f.exponent, f.stderr));
        ctx.say(format!(
            "{} {:<10} bound ε^{:<5} growth {:.3}, fitted exponent {fit}",
            if c.pass { "PASS" } else { "FAIL" },
            c.quantity,
            c.bound_exponent,
            c.growth
        ));
    }
    for e in &result.entries {
        if let Some(ev) = e.summary.exit {
            ctx.say(format!("FAIL eps = {}: left the window at t = {:.4}", e.epsilon, ev.t));
        }
    }
    let doc = json!({
        "version": VERSION,
        "config": s.to_json(),
        "result": result,
        "wall_clock_seconds": wall,
    });
    let path = ctx.write_json("sweep.json", &doc)?;
    ctx.say(format!("wrote {}", path.display()));
    println!("sweep {}", if result.pass { "passed" } else { "failed" });
    Ok(if result.pass { EXIT_OK } else { EXIT_FAIL })
}

fn run_verify(ctx: &Ctx) -> Result<i32, CliError> {
    let outcomes = verify::run_all();
    for c in &outcomes {
        ctx.say(format!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let passed = outcomes.iter().filter(|c| c.pass).count();
    println!("{passed}/{} checks passed", outcomes.len());
    Ok(if passed == outcomes.len() { EXIT_OK } else { EXIT_FAIL })
}

fn ode_compare(ctx: &Ctx) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let cfg = &s.run;
    let eps = cfg.forcing.epsilon;
    let kc = KinkConstants::standard();
    let cap = s.ode_cbar * eps.powf(0.75);
    let y0 = [eps * cfg.initial.xi, cfg.initial.u / eps];
    let gaps = gronwall_compare(&GronwallSpec::constant(cap, cap, cap), &cfg.forcing, &kc, y0, s.ode_ds)?;

    let t_end = 1.0 / eps;
    let dt = default_ode_dt(eps);
    let exact = exact_trajectory(cfg.initial, &cfg.forcing, &kc, t_end, dt)?;
    let corrected = corrected_trajectory(cfg.initial, &cfg.forcing, &kc, t_end, dt)?;
    let (mut dxi, mut du) = (0.0f64, 0.0f64);
    for (a, b) in exact.y.iter().zip(&corrected.y) {
        dxi = dxi.max((a[0] - b[0]).abs());
        du = du.max((a[1] - b[1]).abs());
    }
    let samples = 100;
    let rows: Vec<_> = (0..=samples)
        .map(|k| {
            let t = t_end * k as f64 / samples as f64;
            let (a, b) = (exact.at(t)?, corrected.at(t)?);
            Ok(json!({ "t": t, "exact": a, "corrected": b }))
        })
        .collect::<kinklab::Result<_>>()?;
    let doc = json!({
        "version": VERSION,
        "config": s.to_json(),
        "gronwall": {
            "injection": cap,
            "y0": y0,
            "gaps": gaps,
            "max_gap_over_injection": gaps.max_xi_gap.max(gaps.max_u_gap) / cap.max(f64::MIN_POSITIVE),
        },
        "exact_vs_corrected": {
            "t_end": t_end,
            "dt": dt,
            "max_xi_diff": dxi,
            "max_u_diff": du,
            "samples": rows,
        },
    });
    ctx.say(format!(
        "gronwall: injection {cap:.4e}, max gap (xi, u) = ({:.4e}, {:.4e})",
        gaps.max_xi_gap, gaps.max_u_gap
    ));
    ctx.say(format!("exact vs corrected over [0, {t_end}]: max |dxi| {dxi:.4e}, max |du| {du:.4e}"));
    let path = ctx.write_json("ode_compare.json", &doc)?;
    ctx.say(format!("wrote {}", path.display()));
    let finite = [gaps.max_xi_gap, gaps.max_u_gap, dxi, du].iter().all(|x| x.is_finite());
    Ok(if finite { EXIT_OK } else { EXIT_FAIL })
}

fn constants(_ctx: &Ctx) -> Result<i32, CliError> {
    let kc = kink_constants(40.0, 0.005)?;
    println!("m  = {:.12}", kc.m);
    println!("i1 = {:.12}", kc.i1);
    println!("i2 = {:.12}", kc.i2);
    Ok(EXIT_OK)
}
