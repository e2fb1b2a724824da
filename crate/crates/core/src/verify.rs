//! Self-checks of the numerical building blocks, run by `kinklab verify`. The
//! ε-sweep scaling checks are run by `kinklab sweep` instead.

use std::f64::consts::PI;
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evolution::{evolve, EvolveConfig, ForcingProfile};
use crate::functionals::{e_functional, energy, lyapunov, lyapunov_rate, momentum, project_n2, remainder, v_dot_from_params};
use crate::grid::{l2_norm, Grid};
use crate::harness::{
    differentiate_series, fit_scaling, make_initial_state, random_pair, run_experiment, transversal_norm2, RunConfig,
};
use crate::kink::{gamma, kink_constants, soliton_pair, KinkConstants, ParamWindow, SolitonParams};
use crate::modulation::{gronwall_compare, rescaled_ode_rhs, rk4_integrate, GronwallSpec};
use crate::symplectic::{decompose, n_jacobian, DecomposeOptions, Decomposition};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn constants() -> Result<String, String> {
    let kc = kink_constants(40.0, 0.005).map_err(err)?;
    let d = format!("m = {:.12}, i1 = {:.12}, i2 = {:.10}", kc.m, kc.i1, kc.i2);
    ensure(
        (kc.m - 8.0).abs() < 1e-9 && (kc.i1 - 2.0 * PI).abs() < 1e-10 && (kc.i2 - PI.powi(3) / 2.0).abs() < 1e-8,
        d,
    )
}

fn jacobian_structure() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(40.0, 0.02).map_err(err)?);
    let m = KinkConstants::standard().m;
    let mut worst = 0.0f64;
    for k in -6..=6 {
        let p = SolitonParams { xi: 0.3, u: 0.1 * k as f64 };
        let s = soliton_pair(p, &g).map_err(err)?;
        let j = n_jacobian(&s, p).map_err(err)?;
        let c = gamma(p.u).map_err(err)?.powi(3) * m;
        let dev = j[0][0].abs().max(j[1][1].abs()).max((j[0][1] - c).abs()).max((j[1][0] + c).abs());
        worst = worst.max(dev);
    }
    ensure(worst <= 1e-6, format!("max deviation from [[0, γ³m], [−γ³m, 0]] = {worst:.2e}"))
}

fn decomposition_recovery() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(40.0, 0.02).map_err(err)?);
    let p = SolitonParams { xi: 0.7, u: 0.25 };
    let s = soliton_pair(p, &g).map_err(err)?;
    let d = decompose(&s, SolitonParams { xi: 0.9, u: 0.1 }, ParamWindow::new(0.5).map_err(err)?, DecomposeOptions::default())
        .map_err(err)?;
    let e = (d.params.xi - p.xi).abs().max((d.params.u - p.u).abs());
    ensure(e <= 1e-9 && d.newton_iterations <= 8, format!("error {e:.2e} after {} iterations", d.newton_iterations))
}

fn random_decomposition(rng: &mut ChaCha8Rng, g: &Arc<Grid>, u_max: f64) -> Decomposition {
    let p = SolitonParams { xi: rng.gen_range(-2.0..2.0), u: rng.gen_range(-u_max..u_max) };
    let (v, w) = random_pair(rng, g, p.xi);
    Decomposition { params: p, v, w, newton_iterations: 0, residual_norm: 0.0 }
}

fn lyapunov_identity() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(40.0, 0.02).map_err(err)?);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = random_decomposition(&mut rng, &g, 0.7);
        worst = worst.max((lyapunov(&d).map_err(err)? - e_functional(&d).map_err(err)?).abs());
    }
    ensure(worst <= 1e-10, format!("max |L − E| = {worst:.2e}"))
}

fn lower_bound() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(40.0, 0.02).map_err(err)?);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..20 {
        let d = random_decomposition(&mut rng, &g, 0.5);
        let (v, w) = project_n2(&d.v, &d.w, d.params).map_err(err)?;
        let size = transversal_norm2(&v, &w);
        let d = Decomposition { v, w, ..d };
        min_ratio = min_ratio.min(e_functional(&d).map_err(err)? / size);
    }
    ensure(min_ratio >= 0.01, format!("min E/(‖v‖²_H1 + ‖w‖²) = {min_ratio:.4}"))
}

fn remainder_order() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(20.0, 0.02).map_err(err)?);
    let theta0 = soliton_pair(SolitonParams { xi: 0.0, u: 0.3 }, &g).map_err(err)?.into_parts().0;
    let v = g.sample(|x| 0.1 * (-(x - 0.5).powi(2)).exp());
    let pairs: Vec<(f64, f64)> = [1.0, 0.5, 0.25, 0.125]
        .iter()
        .map(|&s| Ok((s, l2_norm(&remainder(&v.scaled(s), &theta0).map_err(err)?))))
        .collect::<Result<_, String>>()?;
    let fit = fit_scaling(&pairs).map_err(err)?;
    ensure((fit.exponent - 3.0).abs() <= 0.1, format!("fitted order {:.3}", fit.exponent))
}

fn free_soliton() -> Result<String, String> {
    let g = Arc::new(Grid::symmetric(40.0, 0.02).map_err(err)?);
    let s0 = soliton_pair(SolitonParams { xi: 0.0, u: 0.3 }, &g).map_err(err)?;
    let (h0, p0) = (energy(&s0), momentum(&s0));
    let cfg = EvolveConfig { dt: 0.01, t_end: 5.0, diag_stride: 50, cfl_guard: 0.5 };
    let (mut dh, mut dp) = (0.0f64, 0.0f64);
    let end = evolve(s0, &ForcingProfile::zero(), &cfg, |_, _, s| {
        dh = dh.max((energy(s) - h0).abs() / h0);
        dp = dp.max((momentum(s) - p0).abs() / p0.abs());
        ControlFlow::Continue(())
    })
    .map_err(err)?;
    let d = decompose(&end, SolitonParams { xi: 1.5, u: 0.3 }, ParamWindow::new(0.5).map_err(err)?, DecomposeOptions::default())
        .map_err(err)?;
    let e = (d.params.xi - 1.5).abs();
    ensure(
        e <= 2e-3 && dh <= 1e-5 && dp <= 1e-5,
        format!("|ξ(5) − 1.5| = {e:.2e}, energy drift {dh:.2e}, momentum drift {dp:.2e}"),
    )
}

fn free_error(dx: f64, dt: f64) -> Result<f64, String> {
    let mut c = RunConfig::default();
    c.grid.dx = dx;
    c.evolve.dt = dt;
    c.evolve.t_end = 20.0;
    c.evolve.diag_stride = (0.1 / dt).round() as usize;
    c.forcing = ForcingProfile::zero();
    c.initial = SolitonParams { xi: 0.0, u: 0.3 };
    let r = run_experiment(&c).map_err(err)?;
    let last = r.records.last().ok_or("empty run")?;
    Ok(last.xi - 6.0)
}

fn convergence_order() -> Result<String, String> {
    let (a, b) = (free_error(0.02, 0.01)?, free_error(0.01, 0.005)?);
    let r = a.abs() / b.abs();
    ensure((3.0..=5.0).contains(&r), format!("ξ(20) errors {a:.3e} -> {b:.3e}, ratio {r:.3}"))
}

fn lyapunov_rate_formula() -> Result<String, String> {
    let mut cfg = RunConfig::default();
    cfg.evolve.dt = 0.005;
    cfg.evolve.diag_stride = 1;
    cfg.evolve.t_end = 5.5;
    let s0 = make_initial_state(&cfg).map_err(err)?;
    let mut ds: Vec<(f64, Decomposition)> = Vec::new();
    let mut guess = cfg.initial;
    let mut failure = None;
    evolve(s0, &cfg.forcing, &cfg.evolve, |_, t, s| match decompose(s, guess, cfg.window, cfg.decompose) {
        Ok(d) => {
            guess = d.params;
            ds.push((t, d));
            ControlFlow::Continue(())
        }
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    })
    .map_err(err)?;
    if let Some(e) = failure {
        return Err(e.to_string());
    }
    let ts: Vec<f64> = ds.iter().map(|x| x.0).collect();
    let l = ds.iter().map(|x| lyapunov(&x.1)).collect::<crate::Result<Vec<f64>>>().map_err(err)?;
    let xi_dot = differentiate_series(&ts, &ds.iter().map(|x| x.1.params.xi).collect::<Vec<_>>());
    let u_dot = differentiate_series(&ts, &ds.iter().map(|x| x.1.params.u).collect::<Vec<_>>());
    let (mut sup_fd, mut sup_err) = (0.0f64, 0.0f64);
    for k in 1..ds.len().saturating_sub(1) {
        if !(1.0 - 1e-9..=5.0 + 1e-9).contains(&ts[k]) {
            continue;
        }
        let fd = (l[k + 1] - l[k - 1]) / (ts[k + 1] - ts[k - 1]);
        let d = &ds[k].1;
        let dp = (xi_dot[k], u_dot[k]);
        let rate = lyapunov_rate(d, dp, &cfg.forcing, &v_dot_from_params(d, dp).map_err(err)?).map_err(err)?;
        sup_fd = sup_fd.max(fd.abs());
        sup_err = sup_err.max((rate - fd).abs());
    }
    let rel = sup_err / sup_fd;
    ensure(rel <= 0.05, format!("sup|rate − dL/dt| / sup|dL/dt| = {rel:.4}"))
}

fn rk4_order() -> Result<String, String> {
    let run = |dt: f64| -> Result<f64, String> {
        let t = rk4_integrate(|_, y| Ok([y[1], -y[0]]), [1.0, 0.0], 0.0, 2.0 * PI, dt).map_err(err)?;
        let y = t.last();
        Ok(((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt())
    };
    let (a, b, c) = (run(1e-3)?, run(0.02)?, run(0.01)?);
    let r = b / c;
    ensure(a <= 1e-9 && (r - 16.0).abs() < 1.0, format!("period error {a:.2e}, refinement ratio {r:.2}"))
}

fn gronwall_uniformity() -> Result<String, String> {
    let kc = KinkConstants::standard();
    let mut ratios = Vec::new();
    for &e in &[0.2f64, 0.1, 0.05] {
        let cap = e.powf(0.75);
        let fp = ForcingProfile::gaussian(1.0, 1.0, e).map_err(err)?;
        let g = gronwall_compare(&GronwallSpec::constant(cap, cap, cap), &fp, &kc, [0.0, 0.2 / e], 1e-3).map_err(err)?;
        ratios.push(g.max_xi_gap.max(g.max_u_gap) / cap);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    ensure(hi / lo - 1.0 <= 0.2, format!("gap/ε^(3/4) = {ratios:.4?}"))
}

fn nontrivial_limit() -> Result<String, String> {
    let kc = KinkConstants::standard();
    let fp = ForcingProfile::gaussian(1.0, 1.0, 0.05).map_err(err)?;
    let r = rescaled_ode_rhs([0.0, 1.0], &fp, &kc).map_err(err)?;
    let dev = (r[1] + PI / 4.0).abs();
    ensure(dev <= 0.02, format!("û'(0) = {:.6}, |û'(0) + π/4| = {dev:.2e}", r[1]))
}

fn scaling_fit() -> Result<String, String> {
    let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&e| (e, 3.0 * e * e)).collect();
    let f = fit_scaling(&pairs).map_err(err)?;
    ensure(
        (f.exponent - 2.0).abs() < 1e-12 && (f.constant - 3.0).abs() < 1e-12 && fit_scaling(&[(0.1, 1.0), (0.1, 2.0), (0.2, 1.0)]).is_err(),
        format!("exponent {:.6}, constant {:.6}", f.exponent, f.constant),
    )
}

pub const CHECKS: &[(&str, Check)] = &[
    ("kink constants", constants),
    ("jacobian structure", jacobian_structure),
    ("decomposition recovery", decomposition_recovery),
    ("lyapunov identity", lyapunov_identity),
    ("lyapunov lower bound", lower_bound),
    ("remainder order", remainder_order),
    ("free soliton and conservation", free_soliton),
    ("solver convergence order", convergence_order),
    ("lyapunov rate formula", lyapunov_rate_formula),
    ("rk4 order", rk4_order),
    ("gronwall uniformity", gronwall_uniformity),
    ("nontrivial rescaled limit", nontrivial_limit),
    ("scaling fit", scaling_fit),
];

/// Runs every check, in order.
pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, f)| match f() {
            Ok(detail) => CheckOutcome { name, pass: true, detail },
            Err(detail) => CheckOutcome { name, pass: false, detail },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
