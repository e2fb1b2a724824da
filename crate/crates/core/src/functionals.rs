//! Conserved quantities, the perturbed Hamiltonian, the Lyapunov functional and
//! its time derivative.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::ForcingProfile;
use crate::grid::{derivative, trapezoid, trapezoid_by, Field, Grid};
use crate::kink::{gamma, kink, kink_d1, kink_jet, soliton_pair, tangent_fields, KinkConstants, SolitonParams};
use crate::symplectic::{Decomposition, State};

/// Snapshot of all scalar functionals at one time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FunctionalReport {
    pub energy: f64,
    pub momentum: f64,
    pub h_eps: f64,
    pub l: f64,
    pub e: f64,
    pub n2_check: f64,
}

/// `½∫ ψ² + θ_x² + 2(1 − cos θ) dx`, with `1 − cos θ = 2 sin²(θ/2)`.
pub fn energy(s: &State) -> f64 {
    let th = s.theta().values();
    let ps = s.psi().values();
    let tx = derivative(s.theta());
    let tx = tx.values();
    0.5 * trapezoid_by(th.len(), s.grid().dx(), |i| {
        let h = (0.5 * th[i]).sin();
        ps[i] * ps[i] + tx[i] * tx[i] + 4.0 * h * h
    })
}

/// `∫ ψ θ_x dx`.
pub fn momentum(s: &State) -> f64 {
    let tx = derivative(s.theta());
    let (tx, ps) = (tx.values(), s.psi().values());
    trapezoid_by(ps.len(), s.grid().dx(), |i| ps[i] * tx[i])
}

/// `energy(s) − ∫ F θ dx`.
pub fn hamiltonian_eps(s: &State, fp: &ForcingProfile) -> f64 {
    let h = energy(s);
    if fp.is_trivial() {
        return h;
    }
    let g = s.grid();
    let th = s.theta().values();
    h - trapezoid_by(th.len(), g.dx(), |i| fp.force(g.x(i)) * th[i])
}

/// Grid in `y = x − ξ` covering the support of `f(ε(y + ξ))`, fine enough to
/// resolve `θ_K(γy)`.
fn forcing_quadrature_grid(p: SolitonParams, fp: &ForcingProfile, gm: f64) -> Result<Grid> {
    let r = fp.support_radius() / fp.epsilon;
    Grid::spanning(-p.xi - r, -p.xi + r, 0.01 / gm)
}

/// `m γ(u) − ∫ ε² f(ε(y + ξ)) θ_K(γ(u) y) dy`.
pub fn restricted_hamiltonian(p: SolitonParams, fp: &ForcingProfile, kc: &KinkConstants) -> Result<f64> {
    let gm = gamma(p.u)?;
    let rest = kc.m * gm;
    if fp.is_trivial() {
        return Ok(rest);
    }
    let q = forcing_quadrature_grid(p, fp, gm)?;
    let e2 = fp.epsilon * fp.epsilon;
    let i = trapezoid_by(q.len(), q.dx(), |k| {
        let y = q.x(k);
        e2 * fp.f(fp.epsilon * (y + p.xi)) * kink(gm * y)
    });
    Ok(rest - i)
}

/// `(∂ξ, ∂u)` of [`restricted_hamiltonian`] in closed form:
/// `∂ξ = γ ∫ ε² f(ε(y + ξ)) θ_K'(γy) dy`,
/// `∂u = m u γ³ − u γ³ ∫ ε² f(ε(y + ξ)) y θ_K'(γy) dy`.
pub fn restricted_hamiltonian_gradient(
    p: SolitonParams,
    fp: &ForcingProfile,
    kc: &KinkConstants,
) -> Result<(f64, f64)> {
    let gm = gamma(p.u)?;
    let g3 = gm.powi(3);
    if fp.is_trivial() {
        return Ok((0.0, kc.m * p.u * g3));
    }
    let q = forcing_quadrature_grid(p, fp, gm)?;
    let e2 = fp.epsilon * fp.epsilon;
    let (mut a, mut b) = (Vec::with_capacity(q.len()), Vec::with_capacity(q.len()));
    for y in q.nodes() {
        let fk = e2 * fp.f(fp.epsilon * (y + p.xi)) * kink_d1(gm * y);
        a.push(fk);
        b.push(y * fk);
    }
    let d_xi = gm * trapezoid(&a, q.dx());
    let d_u = kc.m * p.u * g3 - p.u * g3 * trapezoid(&b, q.dx());
    Ok((d_xi, d_u))
}

/// `cos θ_K(Z) = 1 − 2 sech² Z`, evaluated without cancellation.
fn cos_kink(z: f64) -> f64 {
    let k1 = kink_d1(z);
    1.0 - 0.5 * k1 * k1
}

fn cos_theta0(d: &Decomposition) -> Result<Vec<f64>> {
    let gm = gamma(d.params.u)?;
    Ok(d.v.grid().nodes().map(|x| cos_kink(gm * (x - d.params.xi))).collect())
}

/// `∫ w²/2 + v_x²/2 + cos(θ_K(γ(x − ξ))) v²/2 + u w v_x dx`.
pub fn lyapunov(d: &Decomposition) -> Result<f64> {
    d.v.ensure_same_grid(&d.w)?;
    let c = cos_theta0(d)?;
    let vx = derivative(&d.v);
    let (v, w, vx) = (d.v.values(), d.w.values(), vx.values());
    let u = d.params.u;
    Ok(trapezoid_by(v.len(), d.v.grid().dx(), |i| {
        0.5 * (w[i] * w[i] + vx[i] * vx[i] + c[i] * v[i] * v[i]) + u * w[i] * vx[i]
    }))
}

/// `½∫ (w + u v_x)² + (v_x/γ)² + cos(θ_K(Z)) v² dx`.
pub fn e_functional(d: &Decomposition) -> Result<f64> {
    d.v.ensure_same_grid(&d.w)?;
    let gm = gamma(d.params.u)?;
    let c = cos_theta0(d)?;
    let vx = derivative(&d.v);
    let (v, w, vx) = (d.v.values(), d.w.values(), vx.values());
    let u = d.params.u;
    Ok(0.5
        * trapezoid_by(v.len(), d.v.grid().dx(), |i| {
            let a = w[i] + u * vx[i];
            let b = vx[i] / gm;
            a * a + b * b + c[i] * v[i] * v[i]
        }))
}

/// `(Ň₁, Ň₂)` for explicit `(v, w)` at parameters `p`:
/// `Ň₁ = ∫ ∂ξψ₀ v − ∂ξθ₀ w`, `Ň₂ = ∫ ∂uψ₀ v − ∂uθ₀ w`.
pub fn n_check_fields(v: &Field, w: &Field, p: SolitonParams) -> Result<(f64, f64)> {
    v.ensure_same_grid(w)?;
    let t = tangent_fields(p, v.grid())?;
    let (v, w) = (v.values(), w.values());
    let dx = t.xi_theta.grid().dx();
    let pair = |th: &Field, ps: &Field| {
        let (th, ps) = (th.values(), ps.values());
        trapezoid_by(v.len(), dx, |i| ps[i] * v[i] - th[i] * w[i])
    };
    Ok((pair(&t.xi_theta, &t.xi_psi), pair(&t.u_theta, &t.u_psi)))
}

pub fn n_check(d: &Decomposition) -> Result<(f64, f64)> {
    n_check_fields(&d.v, &d.w, d.params)
}

/// Removes the `(∂ξθ₀, ∂ξψ₀)` component so that `Ň₂ = 0`.
pub fn project_n2(v: &Field, w: &Field, p: SolitonParams) -> Result<(Field, Field)> {
    v.ensure_same_grid(w)?;
    let t = tangent_fields(p, v.grid())?;
    let (_, n2) = n_check_fields(v, w, p)?;
    let (_, denom) = n_check_fields(&t.xi_theta, &t.xi_psi, p)?;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::InvalidArgument("degenerate tangent pairing in Ň₂ projection".into()));
    }
    let alpha = n2 / denom;
    Ok((v.lin_comb(1.0, &t.xi_theta, -alpha)?, w.lin_comb(1.0, &t.xi_psi, -alpha)?))
}

/// `cos v − 1 + v²/2`.
fn cos_tail(v: f64) -> f64 {
    if v.abs() < 0.1 {
        let v2 = v * v;
        v2 * v2 * (1.0 / 24.0 - v2 * (1.0 / 720.0 - v2 * (1.0 / 40320.0 - v2 / 3628800.0)))
    } else {
        v.cos() - 1.0 + 0.5 * v * v
    }
}

/// `sin v − v`.
fn sin_tail(v: f64) -> f64 {
    if v.abs() < 0.1 {
        let v2 = v * v;
        -v * v2 * (1.0 / 6.0 - v2 * (1.0 / 120.0 - v2 * (1.0 / 5040.0 - v2 / 362880.0)))
    } else {
        v.sin() - v
    }
}

/// Pointwise `sin(θ₀ + v) − sin θ₀ − cos θ₀ v + sin θ₀ v²/2`.
pub fn remainder(v: &Field, theta0: &Field) -> Result<Field> {
    v.zip_with(theta0, |v, t| t.sin() * cos_tail(v) + t.cos() * sin_tail(v))
}

/// `∂t v = w − ξ̇ ∂ξθ₀ − u̇ ∂uθ₀ + u ∂ξθ₀` for given `(ξ̇, u̇)`.
pub fn v_dot_from_params(d: &Decomposition, d_params: (f64, f64)) -> Result<Field> {
    let t = tangent_fields(d.params, d.v.grid())?;
    let (xi_dot, u_dot) = d_params;
    let c = d.params.u - xi_dot;
    let (w, a, b) = (d.w.values(), t.xi_theta.values(), t.u_theta.values());
    Field::from_values(
        d.v.grid(),
        (0..w.len()).map(|i| w[i] + c * a[i] - u_dot * b[i]).collect(),
    )
}

/// The individual contributions to `dL/dt`, in the order they are summed by
/// [`lyapunov_rate`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RateTerms {
    /// `∫ (w + u v_x)(sin θ₀ v²/2 − R)` with `R` from [`remainder`].
    pub cubic: f64,
    /// `−u̇ ∫ sin θ₀ ∂uθ₀ v²/2`.
    pub potential_u: f64,
    /// `(ξ̇ − u) ∫ cos θ₀ v v_x`.
    pub potential_xi: f64,
    /// `u̇ ∫ w v_x`.
    pub momentum: f64,
    /// `ε² ∫ v̇ f(εx)`.
    pub force_v_dot: f64,
    /// `u u̇ γ³ ε² ∫ (x − ξ) θ_K'(Z) f(εx)`.
    pub force_u: f64,
    /// `(u − ξ̇) γ ε² ∫ θ_K'(Z) f(εx)`.
    pub force_xi: f64,
    /// `−u ε³ ∫ v f'(εx)`.
    pub force_slope: f64,
}

impl RateTerms {
    pub fn sum(&self) -> f64 {
        self.cubic
            + self.potential_u
            + self.potential_xi
            + self.momentum
            + self.force_v_dot
            + self.force_u
            + self.force_xi
            + self.force_slope
    }
}

pub fn lyapunov_rate_terms(
    d: &Decomposition,
    d_params: (f64, f64),
    fp: &ForcingProfile,
    v_dot: &Field,
) -> Result<RateTerms> {
    d.v.ensure_same_grid(&d.w)?;
    d.v.ensure_same_grid(v_dot)?;
    let g: &Arc<Grid> = d.v.grid();
    let dx = g.dx();
    let SolitonParams { xi, u } = d.params;
    let (xi_dot, u_dot) = d_params;
    let gm = gamma(u)?;
    let g3 = gm.powi(3);
    let t = tangent_fields(d.params, g)?;
    let theta0 = soliton_pair(d.params, g)?.into_parts().0;
    let r = remainder(&d.v, &theta0)?;
    let vx = derivative(&d.v);
    let (v, w, vx, vd, r) = (d.v.values(), d.w.values(), vx.values(), v_dot.values(), r.values());
    let ut = t.u_theta.values();
    let n = v.len();

    let mut cubic = Vec::with_capacity(n);
    let mut pot_u = Vec::with_capacity(n);
    let mut pot_xi = Vec::with_capacity(n);
    let mut mom = Vec::with_capacity(n);
    for i in 0..n {
        let z = gm * (g.x(i) - xi);
        let [_, k1, k2, _] = kink_jet(z);
        let (s0, c0) = (k2, 1.0 - 0.5 * k1 * k1);
        cubic.push((w[i] + u * vx[i]) * (0.5 * s0 * v[i] * v[i] - r[i]));
        pot_u.push(0.5 * s0 * ut[i] * v[i] * v[i]);
        pot_xi.push(c0 * v[i] * vx[i]);
        mom.push(w[i] * vx[i]);
    }
    let mut terms = RateTerms {
        cubic: trapezoid(&cubic, dx),
        potential_u: -u_dot * trapezoid(&pot_u, dx),
        potential_xi: (xi_dot - u) * trapezoid(&pot_xi, dx),
        momentum: u_dot * trapezoid(&mom, dx),
        force_v_dot: 0.0,
        force_u: 0.0,
        force_xi: 0.0,
        force_slope: 0.0,
    };
    if !fp.is_trivial() {
        let eps = fp.epsilon;
        let e2 = eps * eps;
        let (mut a, mut b, mut c, mut e) = (0.0, 0.0, 0.0, 0.0);
        let nodes: Vec<[f64; 4]> = (0..n)
            .map(|i| {
                let x = g.x(i);
                let y = x - xi;
                let f = fp.f(eps * x);
                let k1 = kink_d1(gm * y);
                [vd[i] * f, y * k1 * f, k1 * f, v[i] * fp.df(eps * x)]
            })
            .collect();
        for (k, acc) in [&mut a, &mut b, &mut c, &mut e].into_iter().enumerate() {
            *acc = trapezoid_by(n, dx, |i| nodes[i][k]);
        }
        terms.force_v_dot = e2 * a;
        terms.force_u = u * u_dot * g3 * e2 * b;
        terms.force_xi = (u - xi_dot) * gm * e2 * c;
        terms.force_slope = -u * e2 * eps * e;
    }
    Ok(terms)
}

/// `dL/dt` assembled term by term from the decomposition, the parameter rates
/// `(ξ̇, u̇)` and `v̇`.
pub fn lyapunov_rate(d: &Decomposition, d_params: (f64, f64), fp: &ForcingProfile, v_dot: &Field) -> Result<f64> {
    lyapunov_rate_terms(d, d_params, fp, v_dot).map(|t| t.sum())
}

pub fn report(s: &State, d: &Decomposition, fp: &ForcingProfile) -> Result<FunctionalReport> {
    Ok(FunctionalReport {
        energy: energy(s),
        momentum: momentum(s),
        h_eps: hamiltonian_eps(s, fp),
        l: lyapunov(d)?,
        e: e_functional(d)?,
        n2_check: n_check(d)?.1,
    })
}
