//! Symplectic pairing, the orthogonality conditions and their Newton solve.
//!
//! The pairing used throughout is `Ω(a, b) = ⟨a, J b⟩` with
//! `J = [[0, −1], [1, 0]]`, i.e. `Ω((θ, ψ), (θ', ψ')) = ∫ ψ θ' − θ ψ' dx`.
//! With this orientation the Jacobian of the orthogonality map at a point of
//! the soliton family is `[[0, γ³m], [−γ³m, 0]]`.

use std::sync::Arc;

use crate::error::{DecomposeError, Error, Result};
use crate::grid::{trapezoid_by, Field, Grid};
use crate::kink::{self, gamma, soliton_pair, tangent_fields, ParamWindow, SolitonParams};

/// Field pair `(θ, ψ)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    theta: Field,
    psi: Field,
}

impl State {
    pub fn new(theta: Field, psi: Field) -> Result<Self> {
        theta.ensure_same_grid(&psi)?;
        Ok(Self { theta, psi })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.theta.grid()
    }

    pub fn theta(&self) -> &Field {
        &self.theta
    }

    pub fn psi(&self) -> &Field {
        &self.psi
    }

    pub fn theta_mut(&mut self) -> &mut Field {
        &mut self.theta
    }

    pub fn psi_mut(&mut self) -> &mut Field {
        &mut self.psi
    }

    pub fn into_parts(self) -> (Field, Field) {
        (self.theta, self.psi)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.psi.is_finite()
    }

    /// `|θ| ≤ 4π` everywhere; a coarse blow-up flag.
    pub fn theta_bounded(&self) -> bool {
        self.theta
            .values()
            .iter()
            .all(|t| t.abs() <= 4.0 * std::f64::consts::PI)
    }
}

/// Manifold point plus transversal part of a state.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub params: SolitonParams,
    pub v: Field,
    pub w: Field,
    pub newton_iterations: usize,
    /// `max(|N₁|, |N₂|)` at the returned parameters.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DecomposeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_condition: f64,
    pub max_halvings: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
            max_condition: 1e12,
            max_halvings: 10,
        }
    }
}

/// `Ω(a, b) = ∫ a.ψ b.θ − a.θ b.ψ dx` for pairs `(θ, ψ)`.
pub fn omega(a: (&Field, &Field), b: (&Field, &Field)) -> Result<f64> {
    a.0.ensure_same_grid(a.1)?;
    a.0.ensure_same_grid(b.0)?;
    a.0.ensure_same_grid(b.1)?;
    let (at, ap) = (a.0.values(), a.1.values());
    let (bt, bp) = (b.0.values(), b.1.values());
    Ok(trapezoid_by(at.len(), a.0.grid().dx(), |i| {
        ap[i] * bt[i] - at[i] * bp[i]
    }))
}

/// `(N₁, N₂) = (Ω(t_ξ, (v, w)), Ω(t_u, (v, w)))` with `(v, w) = s − (θ₀, ψ₀)(p)`.
pub fn orthogonality_residual(s: &State, p: SolitonParams) -> Result<(f64, f64)> {
    let base = soliton_pair(p, s.grid())?;
    let v = s.theta.lin_comb(1.0, base.theta(), -1.0)?;
    let w = s.psi.lin_comb(1.0, base.psi(), -1.0)?;
    let t = tangent_fields(p, s.grid())?;
    Ok((
        omega(t.xi_pair(), (&v, &w))?,
        omega(t.u_pair(), (&v, &w))?,
    ))
}

/// Derivative of [`orthogonality_residual`] in `(ξ, u)` at fixed `s`.
pub fn n_jacobian(s: &State, p: SolitonParams) -> Result<[[f64; 2]; 2]> {
    residual_and_jacobian(s, p).map(|(_, j)| j)
}

/// Residual and Jacobian in one sweep over the grid.
pub(crate) fn residual_and_jacobian(
    s: &State,
    p: SolitonParams,
) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let gm = gamma(p.u)?;
    let u = p.u;
    let g2 = gm * gm;
    let g3 = g2 * gm;
    let g4 = g2 * g2;
    let g5 = g4 * gm;
    let g6 = g3 * g3;
    let g7 = g6 * gm;
    let dg = u * g3;
    let ddg = g3 + 3.0 * u * u * g5;

    let grid = s.grid();
    let th = s.theta.values();
    let ps = s.psi.values();
    let n = grid.len();
    // accumulators: N1, N2, Ω(t_ξξ, vw), Ω(t_ξu, vw), Ω(t_uu, vw), Ω(t_ξ, t_u)
    let mut acc = [0.0f64; 6];
    for i in 0..n {
        let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let y = grid.x(i) - p.xi;
        let z = gm * y;
        let k0 = kink::kink(z);
        let k1 = kink::kink_d1(z);
        let k2 = kink::kink_d2(z);
        let k3 = kink::kink_d3(z);
        let v = th[i] - k0;
        let w = ps[i] + u * gm * k1;

        let xt = -gm * k1;
        let xp = u * g2 * k2;
        let ut = dg * y * k1;
        let up = -g3 * k1 - u * u * g4 * y * k2;

        let xxt = g2 * k2;
        let xxp = -u * g3 * k3;
        let xut = -dg * (k1 + z * k2);
        let xup = (g2 + 2.0 * u * u * g4) * k2 + u * u * g5 * y * k3;
        let uut = ddg * y * k1 + dg * dg * y * y * k2;
        let uup = -3.0 * u * g5 * k1
            - (u * g6 + 2.0 * u * g4 + 4.0 * u.powi(3) * g6) * y * k2
            - u.powi(3) * g7 * y * y * k3;

        acc[0] += wgt * (xp * v - xt * w);
        acc[1] += wgt * (up * v - ut * w);
        acc[2] += wgt * (xxp * v - xxt * w);
        acc[3] += wgt * (xup * v - xut * w);
        acc[4] += wgt * (uup * v - uut * w);
        acc[5] += wgt * (xp * ut - xt * up);
    }
    let h = grid.dx();
    let [n1, n2, a, b, c, cross] = acc.map(|x| x * h);
    // ∂_j N_i = Ω(∂_j t_i, (v, w)) − Ω(t_i, t_j)
    let jac = [[a, b - cross], [b + cross, c]];
    Ok(([n1, n2], jac))
}

fn condition_estimate(j: &[[f64; 2]; 2]) -> f64 {
    let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
    let fro2 = j.iter().flatten().map(|x| x * x).sum::<f64>();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // σ₁σ₂ = |det|, σ₁² + σ₂² = ‖J‖_F²
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

/// Solves `N(s, ξ, u) = 0` for `(ξ, u)` in `Σ(2, U)` by Newton's method with
/// the exact Jacobian, starting from `guess`.
///
/// Steps that would leave `Σ(2, U)` are halved (at most `max_halvings` times);
/// if the window cannot be kept the solve fails with
/// [`DecomposeError::LeftWindow`], which callers treat as the exit-time event.
pub fn decompose(
    s: &State,
    guess: SolitonParams,
    window: ParamWindow,
    opts: DecomposeOptions,
) -> Result<Decomposition> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let bound = window.velocity_bound(2.0);
    if !window.contains(2.0, guess) {
        return Err(DecomposeError::LeftWindow { u: guess.u, bound }.into());
    }
    let mut p = guess;
    let mut iterations = 0;
    loop {
        let (res, jac) = residual_and_jacobian(s, p)?;
        let r = res[0].abs().max(res[1].abs());
        if r <= opts.tol {
            let base = soliton_pair(p, s.grid())?;
            return Ok(Decomposition {
                params: p,
                v: s.theta.lin_comb(1.0, base.theta(), -1.0)?,
                w: s.psi.lin_comb(1.0, base.psi(), -1.0)?,
                newton_iterations: iterations,
                residual_norm: r,
            });
        }
        if iterations >= opts.max_iter {
            return Err(DecomposeError::NoConvergence { iterations, residual: r }.into());
        }
        let cond = condition_estimate(&jac);
        if !(cond <= opts.max_condition) {
            return Err(DecomposeError::SingularJacobian { cond }.into());
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let d_xi = -(jac[1][1] * res[0] - jac[0][1] * res[1]) / det;
        let d_u = -(-jac[1][0] * res[0] + jac[0][0] * res[1]) / det;
        let mut lambda = 1.0;
        let mut next = SolitonParams { xi: p.xi + d_xi, u: p.u + d_u };
        let mut halvings = 0;
        while !window.contains(2.0, next) {
            if halvings == opts.max_halvings {
                return Err(DecomposeError::LeftWindow { u: next.u, bound }.into());
            }
            lambda *= 0.5;
            halvings += 1;
            next = SolitonParams { xi: p.xi + lambda * d_xi, u: p.u + lambda * d_u };
        }
        p = next;
        iterations += 1;
    }
}
