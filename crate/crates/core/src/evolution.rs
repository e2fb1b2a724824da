//! Time integration of `θ_t = ψ`, `ψ_t = θ_xx − sin θ + ε² f(εx)` on a
//! truncated domain.
//!
//! The scheme is velocity Verlet with the 3-point Laplacian. The two end nodes
//! are Dirichlet nodes: their time derivatives are pinned to zero, so they keep
//! the values they were initialised with (`0` and `2π` for a kink).

use std::ops::ControlFlow;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{second_derivative_into, Field, Grid};
use crate::kink::sech;
use crate::symplectic::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingFamily {
    Zero,
    Gaussian,
    Sech2,
}

impl std::str::FromStr for ForcingFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "none" => Ok(Self::Zero),
            "gaussian" => Ok(Self::Gaussian),
            "sech2" => Ok(Self::Sech2),
            other => Err(Error::InvalidArgument(format!("unknown forcing family '{other}'"))),
        }
    }
}

impl std::fmt::Display for ForcingFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::Gaussian => "gaussian",
            Self::Sech2 => "sech2",
        })
    }
}

/// The slowly varying forcing `F(ε, x) = ε² f(εx)`.
///
/// * gaussian: `f(y) = A exp(−y²/σ²)`
/// * sech2: `f(y) = A sech²(y/σ)`
/// * zero: `f ≡ 0`
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForcingProfile {
    pub family: ForcingFamily,
    pub amplitude: f64,
    pub width: f64,
    pub epsilon: f64,
}

impl ForcingProfile {
    pub fn new(family: ForcingFamily, amplitude: f64, width: f64, epsilon: f64) -> Result<Self> {
        let fp = Self { family, amplitude, width, epsilon };
        fp.validate()?;
        Ok(fp)
    }

    pub fn zero() -> Self {
        Self { family: ForcingFamily::Zero, amplitude: 0.0, width: 1.0, epsilon: 0.0 }
    }

    pub fn gaussian(amplitude: f64, width: f64, epsilon: f64) -> Result<Self> {
        Self::new(ForcingFamily::Gaussian, amplitude, width, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidArgument(format!("forcing width must be positive, got {}", self.width)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("forcing amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    /// True when `F ≡ 0`.
    pub fn is_trivial(&self) -> bool {
        self.family == ForcingFamily::Zero || self.amplitude == 0.0 || self.epsilon == 0.0
    }

    /// `f(y)`.
    pub fn f(&self, y: f64) -> f64 {
        let s = y / self.width;
        match self.family {
            ForcingFamily::Zero => 0.0,
            ForcingFamily::Gaussian => self.amplitude * (-s * s).exp(),
            ForcingFamily::Sech2 => self.amplitude * sech(s).powi(2),
        }
    }

    /// `f'(y)`.
    pub fn df(&self, y: f64) -> f64 {
        let s = y / self.width;
        match self.family {
            ForcingFamily::Zero => 0.0,
            ForcingFamily::Gaussian => -2.0 * s / self.width * self.amplitude * (-s * s).exp(),
            ForcingFamily::Sech2 => -2.0 / self.width * self.amplitude * sech(s).powi(2) * s.tanh(),
        }
    }

    /// `F(ε, x) = ε² f(εx)`.
    pub fn force(&self, x: f64) -> f64 {
        self.epsilon * self.epsilon * self.f(self.epsilon * x)
    }

    /// Radius in the `y = εx` variable beyond which `|f| < 1e−27 |A|`.
    pub fn support_radius(&self) -> f64 {
        match self.family {
            ForcingFamily::Zero => 0.0,
            ForcingFamily::Gaussian => 8.0 * self.width,
            ForcingFamily::Sech2 => 32.0 * self.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub diag_stride: usize,
    pub cfl_guard: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { dt: 0.01, t_end: 10.0, diag_stride: 10, cfl_guard: 0.5 }
    }
}

impl EvolveConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt and t_end must be positive (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if self.diag_stride == 0 {
            return Err(Error::InvalidArgument("diagnostic stride must be at least 1".into()));
        }
        if !(self.cfl_guard > 0.0 && self.cfl_guard <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl guard must lie in (0, 1], got {}", self.cfl_guard)));
        }
        if self.dt > self.cfl_guard * grid.dx() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} violates dt <= {} * dx = {}",
                self.dt,
                self.cfl_guard,
                self.cfl_guard * grid.dx()
            )));
        }
        Ok(())
    }

    /// Number of steps and the step actually used so the run lands on `t_end`.
    pub fn schedule(&self) -> (usize, f64) {
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

pub fn forcing_field(fp: &ForcingProfile, g: &Arc<Grid>) -> Field {
    if fp.is_trivial() {
        return g.zeros();
    }
    g.sample(|x| fp.force(x))
}

/// `(ψ, θ_xx − sin θ + F)` with both boundary rows set to zero.
pub fn rhs(s: &State, force: &Field) -> Result<(Field, Field)> {
    s.theta().ensure_same_grid(force)?;
    let mut acc = vec![0.0; s.grid().len()];
    acceleration(s.theta().values(), force.values(), s.grid().dx(), &mut acc);
    let mut dtheta = s.psi().values().to_vec();
    let n = dtheta.len();
    dtheta[0] = 0.0;
    dtheta[n - 1] = 0.0;
    Ok((Field::from_raw(s.grid(), dtheta), Field::from_raw(s.grid(), acc)))
}

fn acceleration(theta: &[f64], force: &[f64], dx: f64, out: &mut [f64]) {
    second_derivative_into(theta, dx, out);
    let n = out.len();
    for i in 1..n - 1 {
        out[i] += force[i] - theta[i].sin();
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

/// Velocity-Verlet stepper holding the cached forcing and a scratch buffer.
#[derive(Debug, Clone)]
pub struct Verlet {
    force: Vec<f64>,
    acc: Vec<f64>,
    dx: f64,
}

impl Verlet {
    pub fn new(force: &Field) -> Self {
        Self {
            force: force.values().to_vec(),
            acc: vec![0.0; force.values().len()],
            dx: force.grid().dx(),
        }
    }

    /// Advances `s` by one step in place; fails if the state stops being finite.
    pub fn step_in_place(&mut self, s: &mut State, dt: f64) -> Result<()> {
        let half = 0.5 * dt;
        acceleration(s.theta().values(), &self.force, self.dx, &mut self.acc);
        {
            let psi = s.psi_mut().values_mut();
            for (p, a) in psi.iter_mut().zip(&self.acc) {
                *p += half * a;
            }
        }
        let n = self.acc.len();
        {
            let psi = s.psi().values().to_owned();
            let theta = s.theta_mut().values_mut();
            for i in 1..n - 1 {
                theta[i] += dt * psi[i];
            }
        }
        acceleration(s.theta().values(), &self.force, self.dx, &mut self.acc);
        let psi = s.psi_mut().values_mut();
        let mut finite = true;
        for (p, a) in psi.iter_mut().zip(&self.acc) {
            *p += half * a;
            finite &= p.is_finite();
        }
        if !finite || !s.theta().is_finite() {
            return Err(Error::BlowUp { step: 0, t: f64::NAN, what: "non-finite field values".into() });
        }
        Ok(())
    }
}

/// One Verlet step from `s`.
pub fn step(s: &State, force: &Field, dt: f64) -> Result<State> {
    let mut next = s.clone();
    Verlet::new(force).step_in_place(&mut next, dt)?;
    Ok(next)
}

/// Integrates to `cfg.t_end`, calling `observer(step, t, state)` at step 0 and
/// every `diag_stride` steps. The observer may stop the run early by returning
/// `ControlFlow::Break`; the state reached so far is then returned.
pub fn evolve<O>(s0: State, fp: &ForcingProfile, cfg: &EvolveConfig, mut observer: O) -> Result<State>
where
    O: FnMut(usize, f64, &State) -> ControlFlow<()>,
{
    fp.validate()?;
    cfg.validate(s0.grid())?;
    let force = forcing_field(fp, s0.grid());
    let mut stepper = Verlet::new(&force);
    let (n_steps, dt) = cfg.schedule();
    let mut s = s0;
    if observer(0, 0.0, &s).is_break() {
        return Ok(s);
    }
    for k in 1..=n_steps {
        let t = k as f64 * dt;
        stepper.step_in_place(&mut s, dt).map_err(|e| match e {
            Error::BlowUp { what, .. } => Error::BlowUp { step: k, t, what },
            other => other,
        })?;
        if (k % cfg.diag_stride == 0 || k == n_steps) && observer(k, t, &s).is_break() {
            break;
        }
    }
    Ok(s)
}
