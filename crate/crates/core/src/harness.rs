//! Experiment orchestration: run the field equation, decompose periodically,
//! compare against the modulation equations, sweep ε and fit scaling laws.

use std::io::Write;
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{DecomposeError, Error, Result};
use crate::evolution::{evolve, EvolveConfig, ForcingProfile};
use crate::functionals::{e_functional, energy, lyapunov, momentum, n_check};
use crate::grid::{h1_norm_sq, l2_norm, Field, Grid};
use crate::kink::{kink, soliton_pair, tangent_fields, KinkConstants, ParamWindow, SolitonParams};
use crate::modulation::{default_ode_dt, exact_trajectory, w_drift, Trajectory};
use crate::symplectic::{decompose, omega, DecomposeOptions, State};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub dx: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::symmetric(self.half_width, self.dx)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// Seeded random bumps, made Ω-orthogonal to both tangents and scaled so
    /// that `‖v‖²_{H¹} + ‖w‖²_{L²} = ε^{11/4}`.
    RandomBump,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Self::None),
            "random_bump" | "bump" => Ok(Self::RandomBump),
            other => Err(Error::InvalidArgument(format!("unknown perturbation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::RandomBump => "random_bump",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub evolve: EvolveConfig,
    pub forcing: ForcingProfile,
    pub initial: SolitonParams,
    pub window: ParamWindow,
    pub perturbation: Perturbation,
    pub seed: u64,
    pub decompose: DecomposeOptions,
    /// Largest tolerated deviation of the state from its asymptotes at the
    /// boundary nodes.
    pub boundary_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { half_width: 60.0, dx: 0.02 },
            evolve: EvolveConfig { dt: 0.01, t_end: 10.0, diag_stride: 10, cfl_guard: 0.5 },
            forcing: ForcingProfile {
                family: crate::evolution::ForcingFamily::Gaussian,
                amplitude: 1.0,
                width: 1.0,
                epsilon: 0.1,
            },
            initial: SolitonParams { xi: 0.0, u: 0.2 },
            window: ParamWindow::new(0.5).expect("valid window"),
            perturbation: Perturbation::None,
            seed: 1,
            decompose: DecomposeOptions::default(),
            boundary_tol: 1e-10,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.grid.build()?;
        self.evolve.validate(&g)?;
        self.forcing.validate()?;
        let u = self.window.u_max();
        if !(self.initial.u.abs() < u) {
            return Err(Error::InvalidArgument(format!(
                "initial velocity {} must satisfy |u_s| < U = {u}",
                self.initial.u
            )));
        }
        let e = self.forcing.epsilon;
        if e > 0.0 && self.evolve.t_end > (1.0 / e) * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "t_end = {} exceeds the horizon 1/ε = {}",
                self.evolve.t_end,
                1.0 / e
            )));
        }
        if !(self.boundary_tol > 0.0) {
            return Err(Error::InvalidArgument("boundary tolerance must be positive".into()));
        }
        Ok(())
    }

    /// `ε^{11/4}`, the size allowed for `‖v‖²_{H¹} + ‖w‖²_{L²}` at `t = 0`.
    pub fn budget(&self) -> f64 {
        self.forcing.epsilon.powf(2.75)
    }

    /// Time between diagnostics.
    pub fn diag_interval(&self) -> f64 {
        let (_, dt) = self.evolve.schedule();
        dt * self.evolve.diag_stride as f64
    }
}

/// A smooth random pair: four Gaussian bumps in each component centred within
/// eight units of `centre`.
pub fn random_pair<R: Rng>(rng: &mut R, g: &Arc<Grid>, centre: f64) -> (Field, Field) {
    let one = |rng: &mut R| {
        let bumps: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (centre + rng.gen_range(-8.0..8.0), rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0)))
            .collect();
        g.sample(|x| bumps.iter().map(|&(c, s, a)| a * (-((x - c) / s).powi(2)).exp()).sum())
    };
    let v = one(rng);
    let w = one(rng);
    (v, w)
}

/// `‖v‖²_{H¹} + ‖w‖²_{L²}`.
pub fn transversal_norm2(v: &Field, w: &Field) -> f64 {
    h1_norm_sq(v) + l2_norm(w).powi(2)
}

/// Removes the tangent components of `(v, w)` so that both `Ω(t_ξ, ·)` and
/// `Ω(t_u, ·)` vanish.
pub fn orthogonalize(v: &Field, w: &Field, p: SolitonParams) -> Result<(Field, Field)> {
    let t = tangent_fields(p, v.grid())?;
    let cross = omega(t.xi_pair(), t.u_pair())?;
    if cross == 0.0 || !cross.is_finite() {
        return Err(Error::InvalidArgument("degenerate tangent Gram matrix".into()));
    }
    let n1 = omega(t.xi_pair(), (v, w))?;
    let n2 = omega(t.u_pair(), (v, w))?;
    // Ω(t_ξ, t_ξ) = Ω(t_u, t_u) = 0, so each coefficient decouples
    let a = -n2 / cross;
    let b = n1 / cross;
    let v = v.lin_comb(1.0, &t.xi_theta, -a)?.lin_comb(1.0, &t.u_theta, -b)?;
    let w = w.lin_comb(1.0, &t.xi_psi, -a)?.lin_comb(1.0, &t.u_psi, -b)?;
    Ok((v, w))
}

pub fn make_initial_state(cfg: &RunConfig) -> Result<State> {
    cfg.validate()?;
    let g = cfg.grid.build()?;
    let base = soliton_pair(cfg.initial, &g)?;
    let budget = cfg.budget();
    if cfg.perturbation == Perturbation::None || budget == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (v, w) = random_pair(&mut rng, &g, cfg.initial.xi);
    let (v, w) = orthogonalize(&v, &w, cfg.initial)?;
    let size = transversal_norm2(&v, &w);
    if !(size > 0.0) {
        return Err(Error::InvalidArgument("perturbation vanished after orthogonalization".into()));
    }
    let c = (budget / size).sqrt();
    State::new(
        base.theta().lin_comb(1.0, &v, c)?,
        base.psi().lin_comb(1.0, &w, c)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub xi: f64,
    pub u: f64,
    pub v_h1: f64,
    pub w_l2: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    pub xi_dot_res: f64,
    pub u_dot_res: f64,
    pub xi_gap: f64,
    pub u_gap: f64,
    pub energy: f64,
    pub momentum: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 16] = [
        "t", "xi", "u", "v_h1", "w_l2", "L", "E", "N1", "N2", "xi_dot_res", "u_dot_res", "xi_gap", "u_gap",
        "energy", "momentum", "newton_iters",
    ];

    /// `‖v‖²_{H¹} + ‖w‖²_{L²}`.
    pub fn norm2(&self) -> f64 {
        self.v_h1 * self.v_h1 + self.w_l2 * self.w_l2
    }

    pub fn params(&self) -> SolitonParams {
        SolitonParams { xi: self.xi, u: self.u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExitEvent {
    pub t: f64,
    pub u: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunSummary {
    pub epsilon: f64,
    pub t_end: f64,
    pub t_reached: f64,
    pub records: usize,
    pub initial_norm2: f64,
    pub sup_norm2: f64,
    pub sup_xi_dot_res: f64,
    pub sup_u_dot_res: f64,
    pub sup_xi_gap: f64,
    pub sup_u_gap: f64,
    pub sup_n: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
    pub max_newton_iters: usize,
    /// Every record lies in `Σ(5, U)`.
    pub window_ok: bool,
    pub exit: Option<ExitEvent>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub records: Vec<DiagnosticsRecord>,
    pub exit: Option<ExitEvent>,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        let r = &self.records;
        let sup = |f: &dyn Fn(&DiagnosticsRecord) -> f64| r.iter().map(f).fold(0.0, f64::max);
        let first = r.first();
        let drift = |f: &dyn Fn(&DiagnosticsRecord) -> f64| match first {
            Some(r0) => {
                let scale = f(r0).abs().max(f64::MIN_POSITIVE);
                r.iter().map(|x| (f(x) - f(r0)).abs()).fold(0.0, f64::max) / scale
            }
            None => 0.0,
        };
        RunSummary {
            epsilon: self.config.forcing.epsilon,
            t_end: self.config.evolve.t_end,
            t_reached: r.last().map_or(0.0, |x| x.t),
            records: r.len(),
            initial_norm2: first.map_or(0.0, |x| x.norm2()),
            sup_norm2: sup(&|x| x.norm2()),
            sup_xi_dot_res: sup(&|x| x.xi_dot_res),
            sup_u_dot_res: sup(&|x| x.u_dot_res),
            sup_xi_gap: sup(&|x| x.xi_gap),
            sup_u_gap: sup(&|x| x.u_gap),
            sup_n: sup(&|x| x.n1.abs().max(x.n2.abs())),
            energy_drift: drift(&|x| x.energy),
            momentum_drift: drift(&|x| x.momentum),
            max_newton_iters: r.iter().map(|x| x.newton_iters).max().unwrap_or(0),
            window_ok: r.iter().all(|x| self.config.window.contains(5.0, x.params())),
            exit: self.exit,
        }
    }
}

/// Derivative of a sampled series by three-point differences (centred in the
/// interior, one-sided second order at the ends); handles uneven spacing.
pub fn differentiate_series(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (y[1] - y[0]) / (t[1] - t[0]);
            return vec![d, d];
        }
        _ => {}
    }
    let three = |i0: usize, at: usize| {
        let (x0, x1, x2) = (t[i0], t[i0 + 1], t[i0 + 2]);
        let x = t[at];
        let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        l0 * y[i0] + l1 * y[i0 + 1] + l2 * y[i0 + 2]
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                three(0, 0)
            } else if i == n - 1 {
                three(n - 3, n - 1)
            } else {
                three(i - 1, i)
            }
        })
        .collect()
}

fn boundary_deviation(s: &State, p: SolitonParams) -> Result<f64> {
    let g = s.grid();
    let th = s.theta().values();
    let n = th.len();
    let gm = crate::kink::gamma(p.u)?;
    let pinned = th[0].abs().max((th[n - 1] - 2.0 * std::f64::consts::PI).abs());
    let tail_left = kink(gm * (g.x_min() - p.xi)).abs();
    let tail_right = (2.0 * std::f64::consts::PI - kink(gm * (g.x_max() - p.xi))).abs();
    Ok(pinned.max(tail_left).max(tail_right))
}

/// Evolves `cfg`, decomposing at every diagnostic time, and assembles the
/// diagnostics. A decomposition that leaves the parameter window ends the run
/// cleanly and is reported as the exit event.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunResult> {
    let s0 = make_initial_state(cfg)?;
    let kc = KinkConstants::standard();
    let fp = cfg.forcing;
    let eps = fp.epsilon;
    let step_dt = cfg.diag_interval();
    let ode = exact_trajectory(cfg.initial, &fp, &kc, cfg.evolve.t_end, default_ode_dt(eps))?;

    let mut raw: Vec<DiagnosticsRecord> = Vec::new();
    let mut guess = cfg.initial;
    let mut exit = None;
    let mut failure: Option<Error> = None;
    evolve(s0, &fp, &cfg.evolve, |_, t, s| {
        let d = match decompose(s, guess, cfg.window, cfg.decompose) {
            Ok(d) => d,
            Err(Error::Decompose(DecomposeError::LeftWindow { u, bound })) => {
                exit = Some(ExitEvent { t, u, bound });
                return ControlFlow::Break(());
            }
            Err(e) => {
                failure = Some(Error::RunFailed { t, source: Box::new(e) });
                return ControlFlow::Break(());
            }
        };
        let record = (|| -> Result<DiagnosticsRecord> {
            let dev = boundary_deviation(s, d.params)?;
            if dev > cfg.boundary_tol {
                return Err(Error::UndersizedDomain { t, deviation: dev });
            }
            let (n1, n2) = n_check(&d)?;
            Ok(DiagnosticsRecord {
                t,
                xi: d.params.xi,
                u: d.params.u,
                v_h1: h1_norm_sq(&d.v).sqrt(),
                w_l2: l2_norm(&d.w),
                l: lyapunov(&d)?,
                e: e_functional(&d)?,
                n1,
                n2,
                xi_dot_res: 0.0,
                u_dot_res: 0.0,
                xi_gap: 0.0,
                u_gap: 0.0,
                energy: energy(s),
                momentum: momentum(s),
                newton_iters: d.newton_iterations,
            })
        })();
        match record {
            Ok(r) => {
                guess = SolitonParams { xi: r.xi + r.u * step_dt, u: r.u };
                raw.push(r);
                ControlFlow::Continue(())
            }
            Err(e @ Error::UndersizedDomain { .. }) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
            Err(e) => {
                failure = Some(Error::RunFailed { t, source: Box::new(e) });
                ControlFlow::Break(())
            }
        }
    })
    .map_err(|e| match e {
        e @ Error::BlowUp { .. } => e,
        other => Error::RunFailed { t: raw.last().map_or(0.0, |r| r.t), source: Box::new(other) },
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let ts: Vec<f64> = raw.iter().map(|r| r.t).collect();
    let xi_dot = differentiate_series(&ts, &raw.iter().map(|r| r.xi).collect::<Vec<_>>());
    let u_dot = differentiate_series(&ts, &raw.iter().map(|r| r.u).collect::<Vec<_>>());
    for (k, r) in raw.iter_mut().enumerate() {
        let w = w_drift(&fp, r.params(), &kc)?;
        r.xi_dot_res = (xi_dot[k] - r.u).abs();
        r.u_dot_res = (u_dot[k] + w).abs();
        let [xb, ub] = ode.at(r.t)?;
        r.xi_gap = (r.xi - xb).abs();
        r.u_gap = (r.u - ub).abs();
    }
    Ok(RunResult { config: *cfg, records: raw, exit })
}

/// Unscaled modulation trajectory used for the gaps of a run.
pub fn reference_trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    let kc = KinkConstants::standard();
    exact_trajectory(cfg.initial, &cfg.forcing, &kc, cfg.evolve.t_end, default_ode_dt(cfg.forcing.epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    pub constant: f64,
}

/// Least-squares fit of `log value = log C + p log ε`.
pub fn fit_scaling(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", pairs.len())));
    }
    if let Some(&(e, v)) = pairs.iter().find(|&&(e, v)| !(e > 0.0 && v > 0.0) || !e.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-positive data point ({e}, {v})")));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    if sxx <= 1e-24 || span <= 0.0 || sorted.windows(2).any(|w| w[1] - w[0] <= 1e-14) {
        return Err(Error::InvalidArgument("degenerate design: repeated ε values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let stderr = if pairs.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(ScalingFit { exponent: slope, stderr, constant: icpt.exp() })
}

/// Consistency check of `sup quantity ≤ C ε^p` across a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundCheck {
    pub quantity: String,
    pub bound_exponent: f64,
    /// `sup quantity / ε^p` per ε, in sweep order.
    pub constants: Vec<f64>,
    /// `max C / C(largest ε)`; the bound constant must not grow as ε shrinks.
    pub growth: f64,
    pub fit: Option<ScalingFit>,
    pub floor_limited: bool,
    pub min_exponent: Option<f64>,
    pub pass: bool,
}

impl BoundCheck {
    pub fn evaluate(
        quantity: &str,
        eps: &[f64],
        values: &[f64],
        bound_exponent: f64,
        min_exponent: Option<f64>,
        floor: f64,
    ) -> Self {
        let constants: Vec<f64> = eps.iter().zip(values).map(|(e, v)| v / e.powf(bound_exponent)).collect();
        let growth = constants.iter().cloned().fold(0.0, f64::max) / constants[0].max(f64::MIN_POSITIVE);
        let floor_limited = values.iter().all(|&v| v <= floor);
        let pairs: Vec<(f64, f64)> = eps.iter().cloned().zip(values.iter().cloned()).collect();
        let fit = if floor_limited { None } else { fit_scaling(&pairs).ok() };
        let stable = growth <= 1.5;
        let exponent_ok = match (min_exponent, fit) {
            (None, _) => true,
            (Some(_), None) => floor_limited,
            (Some(p), Some(f)) => f.exponent >= p,
        };
        Self {
            quantity: quantity.to_string(),
            bound_exponent,
            constants,
            growth,
            fit,
            floor_limited,
            min_exponent,
            pass: values.iter().all(|v| v.is_finite()) && (floor_limited || stable) && exponent_ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
}

impl SweepResult {
    pub fn check(&self, quantity: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.quantity == quantity)
    }
}

/// Values at or below this are treated as discretisation floor.
pub const FLOOR: f64 = 1e-12;

fn sweep_configs(base: &RunConfig, eps_list: &[f64]) -> Result<Vec<RunConfig>> {
    if eps_list.len() < 3 {
        return Err(Error::InvalidArgument(format!("a sweep needs at least 3 ε values, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("ε values must be positive and strictly decreasing".into()));
    }
    eps_list
        .iter()
        .map(|&e| {
            let mut c = *base;
            c.forcing.epsilon = e;
            c.evolve.t_end = 1.0 / e;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs one experiment per ε (each to `T = 1/ε`) and checks the scaling
/// bounds. Runs execute in parallel on at most `threads` workers (all
/// available cores when `None`).
pub fn sweep(base: &RunConfig, eps_list: &[f64], threads: Option<usize>) -> Result<SweepResult> {
    let configs = sweep_configs(base, eps_list)?;
    let run_all = || configs.par_iter().map(run_experiment).collect::<Vec<_>>();
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let mut entries = Vec::with_capacity(results.len());
    for (r, &e) in results.into_iter().zip(eps_list) {
        let r = r?;
        entries.push(SweepEntry { epsilon: e, summary: r.summary() });
    }
    Ok(summarize_sweep(entries))
}

pub fn summarize_sweep(entries: Vec<SweepEntry>) -> SweepResult {
    let eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let col = |f: fn(&RunSummary) -> f64| entries.iter().map(|e| f(&e.summary)).collect::<Vec<_>>();
    let checks = vec![
        BoundCheck::evaluate("u_dot_res", &eps, &col(|s| s.sup_u_dot_res), 2.75, None, FLOOR),
        BoundCheck::evaluate("xi_dot_res", &eps, &col(|s| s.sup_xi_dot_res), 2.75, None, FLOOR),
        BoundCheck::evaluate("xi_gap", &eps, &col(|s| s.sup_xi_gap), 0.75, Some(0.7), FLOOR),
        BoundCheck::evaluate("norm2", &eps, &col(|s| s.sup_norm2), 1.5, Some(1.4), FLOOR),
    ];
    let pass = checks.iter().all(|c| c.pass) && entries.iter().all(|e| e.summary.exit.is_none());
    SweepResult { entries, checks, pass }
}

/// Reads `KINKLAB_THREADS`; unset, empty or zero means "no cap".
pub fn threads_from_env() -> Option<usize> {
    std::env::var("KINKLAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

/// Writes the records as CSV with a header row, LF line endings and full
/// double precision.
pub fn write_csv<W: Write>(records: &[DiagnosticsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", DiagnosticsRecord::COLUMNS.join(","))?;
    for r in records {
        let vals = [
            r.t, r.xi, r.u, r.v_h1, r.w_l2, r.l, r.e, r.n1, r.n2, r.xi_dot_res, r.u_dot_res, r.xi_gap, r.u_gap,
            r.energy, r.momentum,
        ];
        for v in vals {
            write!(out, "{v:.16e},")?;
        }
        writeln!(out, "{}", r.newton_iters)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::ForcingFamily;
    use crate::symplectic::orthogonality_residual;

    fn small_cfg() -> RunConfig {
        RunConfig {
            grid: GridSpec { half_width: 40.0, dx: 0.04 },
            evolve: EvolveConfig { dt: 0.02, t_end: 4.0, diag_stride: 5, cfl_guard: 0.5 },
            ..RunConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.initial.u = 0.6;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.evolve.t_end = 11.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.forcing.epsilon = 0.0;
        c.evolve.t_end = 100.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unperturbed_initial_state_is_the_soliton() {
        let cfg = RunConfig::default();
        let s = make_initial_state(&cfg).unwrap();
        let g = cfg.grid.build().unwrap();
        assert_eq!(s, soliton_pair(cfg.initial, &g).unwrap());
    }

    #[test]
    fn perturbed_initial_state_meets_budget() {
        let cfg = RunConfig { perturbation: Perturbation::RandomBump, seed: 42, ..RunConfig::default() };
        let s = make_initial_state(&cfg).unwrap();
        let g = cfg.grid.build().unwrap();
        let base = soliton_pair(cfg.initial, &g).unwrap();
        let v = s.theta().lin_comb(1.0, base.theta(), -1.0).unwrap();
        let w = s.psi().lin_comb(1.0, base.psi(), -1.0).unwrap();
        assert!((transversal_norm2(&v, &w) - 0.1f64.powf(2.75)).abs() < 1e-12);
        let (n1, n2) = orthogonality_residual(&s, cfg.initial).unwrap();
        assert!(n1.abs() <= 1e-10 && n2.abs() <= 1e-10, "{n1} {n2}");
        assert_eq!(make_initial_state(&cfg).unwrap(), s);
        let other = make_initial_state(&RunConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(other, s);
    }

    #[test]
    fn series_derivative() {
        let t: Vec<f64> = (0..20).map(|k| 0.1 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let d = differentiate_series(&t, &y);
        for (ti, di) in t.iter().zip(&d) {
            assert!((di - (6.0 * ti - 1.0)).abs() < 1e-10);
        }
        let t = [0.0, 0.1, 0.25, 0.3];
        let y: Vec<f64> = t.iter().map(|t| t * t).collect();
        let d = differentiate_series(&t, &y);
        for (ti, di) in t.iter().zip(&d) {
            assert!((di - 2.0 * ti).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_fit() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&e| (e, 3.0 * e * e)).collect();
        let f = fit_scaling(&pairs).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12 && f.stderr <= 1e-12 && (f.constant - 3.0).abs() < 1e-12);
        assert!(fit_scaling(&[(0.1, 1.0), (0.1, 2.0), (0.2, 3.0)]).is_err());
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, 0.0), (0.3, 3.0)]).is_err());
        assert!(fit_scaling(&pairs[..2]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let eps: Vec<f64> = (0..8).map(|k| 0.2 * 0.7f64.powi(k)).collect();
        let pairs: Vec<(f64, f64)> =
            eps.iter().map(|&e| (e, 0.5 * e.powf(1.5) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))).collect();
        let f = fit_scaling(&pairs).unwrap();
        assert!((f.exponent - 1.5).abs() < 0.05);
    }

    #[test]
    fn bound_checks() {
        let eps = [0.2, 0.1, 0.05];
        let c = BoundCheck::evaluate("q", &eps, &[0.2f64.powi(3), 0.1f64.powi(3), 0.05f64.powi(3)], 1.5, Some(1.4), FLOOR);
        assert!(c.pass && c.growth == 1.0);
        let c = BoundCheck::evaluate("q", &eps, &[1e-3, 1e-3, 1e-3], 1.5, Some(1.4), FLOOR);
        assert!(!c.pass);
        let c = BoundCheck::evaluate("q", &eps, &[0.0, 0.0, 0.0], 1.5, Some(1.4), FLOOR);
        assert!(c.pass && c.floor_limited && c.fit.is_none());
    }

    #[test]
    fn csv_layout() {
        let r = DiagnosticsRecord {
            t: 0.1, xi: 0.0, u: 0.2, v_h1: 0.0, w_l2: 0.0, l: 0.0, e: 0.0, n1: 0.0, n2: 0.0, xi_dot_res: 0.0,
            u_dot_res: 0.0, xi_gap: 0.0, u_gap: 0.0, energy: 8.0, momentum: -1.6, newton_iters: 2,
        };
        let mut buf = Vec::new();
        write_csv(&[r, r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], DiagnosticsRecord::COLUMNS.join(","));
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 16);
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.1);
        assert_eq!(fields[15], "2");
    }

    #[test]
    fn free_soliton_run() {
        let mut cfg = small_cfg();
        cfg.forcing = ForcingProfile::zero();
        cfg.initial = SolitonParams { xi: 0.0, u: 0.3 };
        let res = run_experiment(&cfg).unwrap();
        assert!(res.exit.is_none());
        assert_eq!(res.records.len(), 41);
        let s = res.summary();
        assert!(s.sup_norm2 <= 1e-6 && s.sup_xi_gap <= 5e-3 && s.sup_n <= 1e-10, "{s:?}");
        assert!(s.window_ok);
        assert_eq!(s.initial_norm2, 0.0);
    }

    #[test]
    fn forced_run_decelerates() {
        let mut cfg = small_cfg();
        cfg.evolve.t_end = 6.0;
        let res = run_experiment(&cfg).unwrap();
        let u: Vec<f64> = res.records.iter().map(|r| r.u).collect();
        assert!(u.last().unwrap() < &(u[0] - 0.02));
        let s = res.summary();
        assert!(s.sup_norm2.is_finite() && s.sup_norm2 < 1e-2);
    }

    #[test]
    fn first_record_reproduces_budget() {
        let cfg = RunConfig {
            perturbation: Perturbation::RandomBump,
            evolve: EvolveConfig { t_end: 0.2, ..RunConfig::default().evolve },
            ..RunConfig::default()
        };
        let res = run_experiment(&cfg).unwrap();
        let r0 = res.records[0];
        assert_eq!(r0.newton_iters, 0);
        assert!((r0.norm2() - cfg.budget()).abs() < 1e-12);
    }

    #[test]
    fn undersized_domain_is_rejected() {
        let mut cfg = small_cfg();
        cfg.grid.half_width = 12.0;
        assert!(matches!(run_experiment(&cfg), Err(Error::UndersizedDomain { .. })));
    }

    #[test]
    fn window_exit_stops_cleanly() {
        let mut cfg = small_cfg();
        cfg.forcing = ForcingProfile { family: ForcingFamily::Gaussian, amplitude: -40.0, width: 1.0, epsilon: 0.2 };
        cfg.evolve.t_end = 5.0;
        let res = run_experiment(&cfg).unwrap();
        let exit = res.exit.expect("exit event");
        assert!(exit.u.abs() >= exit.bound);
        assert!(res.records.last().unwrap().t < 5.0);
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let base = small_cfg();
        assert!(sweep(&base, &[0.2, 0.1], None).is_err());
        assert!(sweep(&base, &[0.1, 0.2, 0.05], None).is_err());
    }
}
