//! Effective dynamics of the collective coordinates.
//!
//! * exact: `ξ̇ = u`, `u̇ = −W(ε, ξ, u)` with `W = ε² f(εξ) i₁ / (γ³ m)`
//! * corrected: adds the `ε³` drift `−ε³ f'(εξ) u i₂ / (γ³ m)` to `ξ̇`
//! * rescaled (`s = εt`, `ξ̂(s) = ξ̄(s/ε)`, `û(s) = ū(s/ε)/ε`):
//!   `ξ̂' = û`, `û' = −f(εξ̂) i₁ / (γ(εû)³ m)`

use crate::error::{Error, Result};
use crate::evolution::ForcingProfile;
use crate::kink::{gamma, KinkConstants, SolitonParams};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModulationState {
    pub xi_bar: f64,
    pub u_bar: f64,
}

impl ModulationState {
    pub fn new(xi_bar: f64, u_bar: f64) -> Result<Self> {
        gamma(u_bar)?;
        Ok(Self { xi_bar, u_bar })
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.xi_bar, self.u_bar]
    }
}

impl From<SolitonParams> for ModulationState {
    fn from(p: SolitonParams) -> Self {
        Self { xi_bar: p.xi, u_bar: p.u }
    }
}

/// `W(ε, ξ, u) = ε² f(εξ) i₁ / (γ(u)³ m)`.
pub fn w_drift(fp: &ForcingProfile, p: SolitonParams, kc: &KinkConstants) -> Result<f64> {
    let g3 = gamma(p.u)?.powi(3);
    if fp.is_trivial() {
        return Ok(0.0);
    }
    Ok(fp.force(p.xi) * kc.i1 / (g3 * kc.m))
}

pub fn exact_ode_rhs(ms: ModulationState, fp: &ForcingProfile, kc: &KinkConstants) -> Result<[f64; 2]> {
    let w = w_drift(fp, SolitonParams { xi: ms.xi_bar, u: ms.u_bar }, kc)?;
    Ok([ms.u_bar, -w])
}

pub fn corrected_ode_rhs(ms: ModulationState, fp: &ForcingProfile, kc: &KinkConstants) -> Result<[f64; 2]> {
    let [xi_dot, u_dot] = exact_ode_rhs(ms, fp, kc)?;
    if fp.is_trivial() {
        return Ok([xi_dot, u_dot]);
    }
    let e = fp.epsilon;
    let g3 = gamma(ms.u_bar)?.powi(3);
    let drift = e * e * e * fp.df(e * ms.xi_bar) * ms.u_bar * kc.i2 / (g3 * kc.m);
    Ok([xi_dot - drift, u_dot])
}

/// Right-hand side in the slow time `s = εt` for `(ξ̂, û)`.
pub fn rescaled_ode_rhs(hat: [f64; 2], fp: &ForcingProfile, kc: &KinkConstants) -> Result<[f64; 2]> {
    let [xi_hat, u_hat] = hat;
    let g3 = gamma(fp.epsilon * u_hat)?.powi(3);
    let f = match fp.family {
        crate::evolution::ForcingFamily::Zero => 0.0,
        _ => fp.f(fp.epsilon * xi_hat),
    };
    Ok([u_hat, -f * kc.i1 / (g3 * kc.m)])
}

/// Stored solution of a planar ODE.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn last(&self) -> [f64; 2] {
        self.y[self.y.len() - 1]
    }

    /// Linear interpolation between stored nodes.
    pub fn at(&self, t: f64) -> Result<[f64; 2]> {
        let (a, b) = (self.t_start(), self.t_end());
        let slack = 1e-9 * (b - a).abs().max(1.0);
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::InvalidArgument(format!("time {t} outside trajectory range [{a}, {b}]")));
        }
        let t = t.clamp(a, b);
        let k = self.t.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok(self.y[0]);
        }
        if k >= self.t.len() {
            return Ok(self.last());
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let lam = (t - t0) / (t1 - t0);
        let (y0, y1) = (self.y[k - 1], self.y[k]);
        Ok([y0[0] + lam * (y1[0] - y0[0]), y0[1] + lam * (y1[1] - y0[1])])
    }
}

/// Classical RK4 from `t0` to `t1`, storing every step; the final step is
/// shortened to land on `t1`.
pub fn rk4_integrate<F>(mut rhs: F, y0: [f64; 2], t0: f64, t1: f64, dt: f64) -> Result<Trajectory>
where
    F: FnMut(f64, [f64; 2]) -> Result<[f64; 2]>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let n_full = ((t1 - t0) / dt * (1.0 - 1e-12)).floor() as usize;
    let mut traj = Trajectory { t: Vec::with_capacity(n_full + 2), y: Vec::with_capacity(n_full + 2) };
    traj.t.push(t0);
    traj.y.push(y0);
    let mut y = y0;
    let mut k = 0usize;
    loop {
        let t = t0 + k as f64 * dt;
        let h = if k < n_full { dt } else { t1 - t };
        if h <= 0.0 {
            break;
        }
        let add = |y: [f64; 2], k: [f64; 2], c: f64| [y[0] + c * k[0], y[1] + c * k[1]];
        let k1 = rhs(t, y)?;
        let k2 = rhs(t + 0.5 * h, add(y, k1, 0.5 * h))?;
        let k3 = rhs(t + 0.5 * h, add(y, k2, 0.5 * h))?;
        let k4 = rhs(t + h, add(y, k3, h))?;
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::NonFinite(format!("ODE state at t = {}", t + h)));
        }
        k += 1;
        let tn = if k <= n_full { t0 + k as f64 * dt } else { t1 };
        traj.t.push(tn);
        traj.y.push(y);
        if k > n_full {
            break;
        }
    }
    Ok(traj)
}

/// Maps a slow-time trajectory `(ξ̂, û)(s)` to `(ξ̄, ū)(t)` with `t = s/ε`,
/// `ū = εû`.
pub fn unscale(hat: &Trajectory, eps: f64) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    Ok(Trajectory {
        t: hat.t.iter().map(|s| s / eps).collect(),
        y: hat.y.iter().map(|&[x, u]| [x, eps * u]).collect(),
    })
}

/// Inverse of [`unscale`].
pub fn scale(traj: &Trajectory, eps: f64) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    Ok(Trajectory {
        t: traj.t.iter().map(|t| t * eps).collect(),
        y: traj.y.iter().map(|&[x, u]| [x, u / eps]).collect(),
    })
}

/// Integrates the exact modulation equations from `p0` over `[0, t_end]`.
pub fn exact_trajectory(
    p0: SolitonParams,
    fp: &ForcingProfile,
    kc: &KinkConstants,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    rk4_integrate(
        |_, y| exact_ode_rhs(ModulationState { xi_bar: y[0], u_bar: y[1] }, fp, kc),
        [p0.xi, p0.u],
        0.0,
        t_end,
        dt,
    )
}

/// Same as [`exact_trajectory`] for the `ε³`-corrected equations.
pub fn corrected_trajectory(
    p0: SolitonParams,
    fp: &ForcingProfile,
    kc: &KinkConstants,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    rk4_integrate(
        |_, y| corrected_ode_rhs(ModulationState { xi_bar: y[0], u_bar: y[1] }, fp, kc),
        [p0.xi, p0.u],
        0.0,
        t_end,
        dt,
    )
}

/// Default ODE step in physical time: `min(1e−3, ε/10)`.
pub fn default_ode_dt(eps: f64) -> f64 {
    if eps > 0.0 {
        (eps / 10.0).min(1e-3)
    } else {
        1e-3
    }
}

/// Injected errors `(ε₁(s), ε₂(s))` on `s ∈ [0, 1]` with their common cap.
pub struct GronwallSpec {
    pub eps1: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub eps2: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub bound: f64,
}

impl std::fmt::Debug for GronwallSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GronwallSpec").field("bound", &self.bound).finish_non_exhaustive()
    }
}

impl GronwallSpec {
    pub fn constant(e1: f64, e2: f64, bound: f64) -> Self {
        Self { eps1: Box::new(move |_| e1), eps2: Box::new(move |_| e2), bound }
    }

    /// Checks `|ε_j| ≤ bound` on a uniform sample of `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            let (a, b) = ((self.eps1)(s), (self.eps2)(s));
            if !(a.abs() <= self.bound * (1.0 + 1e-12) && b.abs() <= self.bound * (1.0 + 1e-12)) {
                return Err(Error::InvalidArgument(format!(
                    "injection ({a}, {b}) at s = {s} exceeds the bound {}",
                    self.bound
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GronwallGaps {
    pub max_xi_gap: f64,
    pub max_u_gap: f64,
    /// Signed `(ξ̃ − ξ̂, ũ − û)` at `s = 1`.
    pub end_gap: [f64; 2],
}

/// Integrates the rescaled system with and without the injected errors from
/// `y0` over `s ∈ [0, 1]` and returns the sup-norm gaps.
pub fn gronwall_compare(
    spec: &GronwallSpec,
    fp: &ForcingProfile,
    kc: &KinkConstants,
    y0: [f64; 2],
    dt: f64,
) -> Result<GronwallGaps> {
    spec.validate()?;
    let plain = rk4_integrate(|_, y| rescaled_ode_rhs(y, fp, kc), y0, 0.0, 1.0, dt)?;
    let forced = rk4_integrate(
        |s, y| {
            let [a, b] = rescaled_ode_rhs(y, fp, kc)?;
            Ok([a + (spec.eps1)(s), b + (spec.eps2)(s)])
        },
        y0,
        0.0,
        1.0,
        dt,
    )?;
    let (mut gx, mut gu) = (0.0f64, 0.0f64);
    for (a, b) in plain.y.iter().zip(&forced.y) {
        gx = gx.max((a[0] - b[0]).abs());
        gu = gu.max((a[1] - b[1]).abs());
    }
    let (a, b) = (plain.last(), forced.last());
    Ok(GronwallGaps { max_xi_gap: gx, max_u_gap: gu, end_gap: [b[0] - a[0], b[1] - a[1]] })
}
