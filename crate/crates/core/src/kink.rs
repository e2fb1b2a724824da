//! The sine-Gordon kink and the two-parameter family of boosted, translated kinks.
//!
//! With `Z = γ(u)(x − ξ)` the family is
//!
//! ```text
//! θ₀(ξ, u, x) = θ_K(Z),    ψ₀(ξ, u, x) = −u γ(u) θ_K'(Z),    θ_K(z) = 4 arctan(eᶻ).
//! ```
//!
//! All parameter derivatives below are closed-form chain-rule expressions in
//! `γ`, `γ' = uγ³`, `γ'' = γ³ + 3u²γ⁵` and the kink derivatives.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{trapezoid_by, Field, Grid};
use crate::symplectic::State;

/// Collective coordinates: kink centre `xi` and velocity `u`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolitonParams {
    pub xi: f64,
    pub u: f64,
}

impl SolitonParams {
    pub fn new(xi: f64, u: f64) -> Result<Self> {
        check_velocity(u)?;
        Ok(Self { xi, u })
    }

    pub fn gamma(&self) -> Result<f64> {
        gamma(self.u)
    }
}

/// The admissible velocity window `Σ(l, U) = ℝ × (−U − V(l), U + V(l))`
/// with `V(l) = (1 − U)/l`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ParamWindow {
    u_max: f64,
}

impl ParamWindow {
    pub fn new(u_max: f64) -> Result<Self> {
        if !(u_max > 0.0 && u_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "window bound U must lie in (0, 1), got {u_max}"
            )));
        }
        Ok(Self { u_max })
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// `V(l) = (1 − U)/l`.
    pub fn margin(&self, l: f64) -> f64 {
        (1.0 - self.u_max) / l
    }

    /// `U + V(l)`, the half-width of the velocity interval of `Σ(l, U)`.
    pub fn velocity_bound(&self, l: f64) -> f64 {
        self.u_max + self.margin(l)
    }

    pub fn contains(&self, l: f64, p: SolitonParams) -> bool {
        p.u.abs() < self.velocity_bound(l)
    }
}

/// `m = ∫ θ_K'² dZ`, `i1 = ∫ θ_K' dZ`, `i2 = ∫ Z² θ_K' dZ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KinkConstants {
    pub m: f64,
    pub i1: f64,
    pub i2: f64,
}

impl KinkConstants {
    /// Constants on `[−40, 40]` with `dz = 0.005`, computed once per process.
    pub fn standard() -> KinkConstants {
        static CACHE: OnceLock<KinkConstants> = OnceLock::new();
        *CACHE.get_or_init(|| kink_constants(40.0, 0.005).expect("valid quadrature setup"))
    }
}

fn check_velocity(u: f64) -> Result<()> {
    if u.is_finite() && u.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::VelocityOutOfRange(u))
    }
}

/// Lorentz factor `1/√(1 − u²)`.
pub fn gamma(u: f64) -> Result<f64> {
    check_velocity(u)?;
    Ok(1.0 / (1.0 - u * u).sqrt())
}

#[inline]
pub(crate) fn sech(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// `θ_K(x) = 4 arctan(eˣ)`, using `2π − 4 arctan(e⁻ˣ)` for positive arguments.
pub fn kink(x: f64) -> f64 {
    if x > 0.0 {
        2.0 * PI - 4.0 * (-x).exp().atan()
    } else {
        4.0 * x.exp().atan()
    }
}

/// `θ_K'(x) = 2 sech x`.
pub fn kink_d1(x: f64) -> f64 {
    2.0 * sech(x)
}

/// `θ_K''(x) = −2 sech x tanh x` (equals `sin θ_K`).
pub fn kink_d2(x: f64) -> f64 {
    -2.0 * sech(x) * x.tanh()
}

/// `θ_K'''(x) = 2 sech x (tanh² x − sech² x)`.
pub fn kink_d3(x: f64) -> f64 {
    let s = sech(x);
    let t = x.tanh();
    2.0 * s * (t * t - s * s)
}

/// Kink profile and its first three derivatives at one point.
#[inline]
pub(crate) fn kink_jet(z: f64) -> [f64; 4] {
    let s = sech(z);
    let t = z.tanh();
    [kink(z), 2.0 * s, -2.0 * s * t, 2.0 * s * (t * t - s * s)]
}

/// `(θ₀, ψ₀)(p)` sampled on `g`.
pub fn soliton_pair(p: SolitonParams, g: &Arc<Grid>) -> Result<State> {
    let gm = gamma(p.u)?;
    let theta = g.sample(|x| kink(gm * (x - p.xi)));
    let psi = g.sample(|x| -p.u * gm * kink_d1(gm * (x - p.xi)));
    State::new(theta, psi)
}

/// First parameter derivatives of `(θ₀, ψ₀)`.
#[derive(Debug, Clone)]
pub struct Tangents {
    pub xi_theta: Field,
    pub xi_psi: Field,
    pub u_theta: Field,
    pub u_psi: Field,
}

impl Tangents {
    /// `(∂ξθ₀, ∂ξψ₀)`.
    pub fn xi_pair(&self) -> (&Field, &Field) {
        (&self.xi_theta, &self.xi_psi)
    }

    /// `(∂uθ₀, ∂uψ₀)`.
    pub fn u_pair(&self) -> (&Field, &Field) {
        (&self.u_theta, &self.u_psi)
    }
}

/// Second parameter derivatives of `(θ₀, ψ₀)`.
#[derive(Debug, Clone)]
pub struct SecondTangents {
    pub xixi_theta: Field,
    pub xixi_psi: Field,
    pub xiu_theta: Field,
    pub xiu_psi: Field,
    pub uu_theta: Field,
    pub uu_psi: Field,
}

pub fn tangent_fields(p: SolitonParams, g: &Arc<Grid>) -> Result<Tangents> {
    let gm = gamma(p.u)?;
    let u = p.u;
    let dg = u * gm.powi(3);
    let g3 = gm.powi(3);
    let n = g.len();
    let mut xi_theta = Vec::with_capacity(n);
    let mut xi_psi = Vec::with_capacity(n);
    let mut u_theta = Vec::with_capacity(n);
    let mut u_psi = Vec::with_capacity(n);
    for x in g.nodes() {
        let y = x - p.xi;
        let [_, k1, k2, _] = kink_jet(gm * y);
        xi_theta.push(-gm * k1);
        xi_psi.push(u * gm * gm * k2);
        u_theta.push(dg * y * k1);
        u_psi.push(-g3 * k1 - u * u * gm.powi(4) * y * k2);
    }
    Ok(Tangents {
        xi_theta: Field::from_raw(g, xi_theta),
        xi_psi: Field::from_raw(g, xi_psi),
        u_theta: Field::from_raw(g, u_theta),
        u_psi: Field::from_raw(g, u_psi),
    })
}

pub fn second_tangent_fields(p: SolitonParams, g: &Arc<Grid>) -> Result<SecondTangents> {
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
    let n = g.len();
    let mut out: [Vec<f64>; 6] = std::array::from_fn(|_| Vec::with_capacity(n));
    for x in g.nodes() {
        let y = x - p.xi;
        let z = gm * y;
        let [_, k1, k2, k3] = kink_jet(z);
        out[0].push(g2 * k2);
        out[1].push(-u * g3 * k3);
        out[2].push(-dg * (k1 + z * k2));
        out[3].push((g2 + 2.0 * u * u * g4) * k2 + u * u * g5 * y * k3);
        out[4].push(ddg * y * k1 + dg * dg * y * y * k2);
        out[5].push(
            -3.0 * u * g5 * k1
                - (u * g6 + 2.0 * u * g4 + 4.0 * u.powi(3) * g6) * y * k2
                - u.powi(3) * g7 * y * y * k3,
        );
    }
    let [a, b, c, d, e, f] = out;
    Ok(SecondTangents {
        xixi_theta: Field::from_raw(g, a),
        xixi_psi: Field::from_raw(g, b),
        xiu_theta: Field::from_raw(g, c),
        xiu_psi: Field::from_raw(g, d),
        uu_theta: Field::from_raw(g, e),
        uu_psi: Field::from_raw(g, f),
    })
}

/// Trapezoid quadrature of the three kink integrals on `[−halfwidth, halfwidth]`.
pub fn kink_constants(quadrature_halfwidth: f64, dz: f64) -> Result<KinkConstants> {
    if !(quadrature_halfwidth >= 30.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature half-width must be at least 30, got {quadrature_halfwidth}"
        )));
    }
    if !(dz > 0.0 && dz <= 0.01) {
        return Err(Error::InvalidArgument(format!(
            "quadrature step must lie in (0, 0.01], got {dz}"
        )));
    }
    let g = Grid::symmetric(quadrature_halfwidth, dz)?;
    let n = g.len();
    let h = g.dx();
    let m = trapezoid_by(n, h, |i| kink_d1(g.x(i)).powi(2));
    let i1 = trapezoid_by(n, h, |i| kink_d1(g.x(i)));
    let i2 = trapezoid_by(n, h, |i| g.x(i).powi(2) * kink_d1(g.x(i)));
    Ok(KinkConstants { m, i1, i2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{derivative, l2_norm, second_derivative};

    fn grid(hw: f64, dx: f64) -> Arc<Grid> {
        Arc::new(Grid::symmetric(hw, dx).unwrap())
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0).unwrap(), 1.0);
        assert!((gamma(0.6).unwrap() - 1.25).abs() < 1e-15);
        assert!((gamma(0.8).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(gamma(1.0).is_err());
        assert!(gamma(-1.2).is_err());
        assert!(gamma(f64::NAN).is_err());
    }

    #[test]
    fn kink_values() {
        assert!((kink(0.0) - PI).abs() < 1e-15);
        assert!((kink(50.0) - 2.0 * PI).abs() < 1e-15);
        assert!(kink(-50.0).abs() < 1e-15);
        assert!(kink(800.0).is_finite() && (kink(800.0) - 2.0 * PI).abs() < 1e-15);
        let h = 1e-5;
        let fd = (kink(h) - kink(-h)) / (2.0 * h);
        assert!((kink_d1(0.0) - 2.0).abs() < 1e-15);
        assert!((fd - 2.0).abs() < 1e-9);
    }

    #[test]
    fn kink_derivatives_match_differences() {
        let h = 1e-5;
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5, 9.0] {
            let c = |f: fn(f64) -> f64| (f(x + h) - f(x - h)) / (2.0 * h);
            assert!((c(kink) - kink_d1(x)).abs() < 1e-8);
            assert!((c(kink_d1) - kink_d2(x)).abs() < 1e-8);
            assert!((c(kink_d2) - kink_d3(x)).abs() < 1e-8);
            assert!((kink_d2(x) - kink(x).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn window_geometry() {
        let w = ParamWindow::new(0.5).unwrap();
        assert!((w.margin(2.0) - 0.25).abs() < 1e-15);
        assert!((w.velocity_bound(2.0) - 0.75).abs() < 1e-15);
        assert!(w.contains(2.0, SolitonParams { xi: 3.0, u: 0.7 }));
        assert!(!w.contains(4.0, SolitonParams { xi: 3.0, u: 0.7 }));
        assert!(ParamWindow::new(1.0).is_err());
    }

    #[test]
    fn soliton_pair_samples() {
        let g = Arc::new(Grid::new(-2.0, 0.2, 21).unwrap());
        let s = soliton_pair(SolitonParams { xi: 0.0, u: 0.0 }, &g).unwrap();
        assert!(s.psi().values().iter().all(|&v| v == 0.0));
        assert!((s.theta().values()[10] - PI).abs() < 1e-15);

        let s = soliton_pair(SolitonParams { xi: 0.0, u: 0.6 }, &g).unwrap();
        assert!((s.theta().values()[10] - PI).abs() < 1e-15);
        // x = 0.8 is node 14
        assert!((s.theta().values()[14] - kink(1.0)).abs() < 1e-14);
        assert!(soliton_pair(SolitonParams { xi: 0.0, u: 1.0 }, &g).is_err());
    }

    #[test]
    fn static_kink_gradient_norm() {
        let g = grid(40.0, 0.01);
        let s = soliton_pair(SolitonParams { xi: 0.0, u: 0.0 }, &g).unwrap();
        let d = derivative(s.theta());
        // central differences carry a known bias: ∫(Dθ)² = 8 − (8/9)dx² + O(dx⁴)
        let h = g.dx();
        assert!((l2_norm(&d).powi(2) - (8.0 - 8.0 * h * h / 9.0)).abs() < 1e-8);
    }

    #[test]
    fn static_identity() {
        let g = grid(40.0, 0.01);
        let s = soliton_pair(SolitonParams { xi: 0.3, u: 0.0 }, &g).unwrap();
        let r = second_derivative(s.theta())
            .zip_with(s.theta(), |a, t| a - t.sin())
            .unwrap();
        let interior: Vec<f64> = r.values()[1..g.len() - 1].to_vec();
        let r = Field::from_values(&Arc::new(Grid::new(0.0, g.dx(), interior.len()).unwrap()), interior).unwrap();
        assert!(l2_norm(&r) <= 1e-4, "{}", l2_norm(&r));
    }

    #[test]
    fn xi_tangent_at_rest_is_minus_profile_slope() {
        let g = grid(10.0, 0.05);
        let t = tangent_fields(SolitonParams { xi: 0.4, u: 0.0 }, &g).unwrap();
        for (i, x) in g.nodes().enumerate() {
            assert!((t.xi_theta.values()[i] + kink_d1(x - 0.4)).abs() < 1e-15);
            assert!((t.u_psi.values()[i] + kink_d1(x - 0.4)).abs() < 1e-15);
        }
    }

    fn rel_l2(a: &Field, b: &Field) -> f64 {
        let d = a.lin_comb(1.0, b, -1.0).unwrap();
        l2_norm(&d) / l2_norm(b).max(1e-300)
    }

    fn fd4<F: Fn(SolitonParams) -> Field>(f: F, p: SolitonParams, dir_xi: bool, h: f64) -> Field {
        let at = |k: f64| {
            if dir_xi {
                f(SolitonParams { xi: p.xi + k * h, u: p.u })
            } else {
                f(SolitonParams { xi: p.xi, u: p.u + k * h })
            }
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        let v: Vec<f64> = (0..m2.values().len())
            .map(|i| {
                (m2.values()[i] - 8.0 * m1.values()[i] + 8.0 * p1.values()[i] - p2.values()[i])
                    / (12.0 * h)
            })
            .collect();
        Field::from_values(m2.grid(), v).unwrap()
    }

    #[test]
    fn tangents_match_fourth_order_differences() {
        let g = grid(30.0, 0.02);
        for &u in &[-0.6, 0.0, 0.3, 0.7] {
            let p = SolitonParams { xi: 0.3, u };
            let t = tangent_fields(p, &g).unwrap();
            let th = |q: SolitonParams| soliton_pair(q, &g).unwrap().theta().clone();
            let ps = |q: SolitonParams| soliton_pair(q, &g).unwrap().psi().clone();
            let h = 1e-4;
            assert!(rel_l2(&fd4(th, p, true, h), &t.xi_theta) < 1e-7);
            // at u = 0 both ∂uθ₀ and ∂ξψ₀ vanish identically
            if u != 0.0 {
                assert!(rel_l2(&fd4(th, p, false, h), &t.u_theta) < 1e-7);
                assert!(rel_l2(&fd4(ps, p, true, h), &t.xi_psi) < 1e-7);
            } else {
                assert!(l2_norm(&fd4(th, p, false, h)) < 1e-9);
                assert!(l2_norm(&t.u_theta) == 0.0 && l2_norm(&t.xi_psi) == 0.0);
            }
            assert!(rel_l2(&fd4(ps, p, false, h), &t.u_psi) < 1e-7);
        }
    }

    #[test]
    fn tangents_match_central_differences_absolutely() {
        let g = grid(30.0, 0.02);
        let p = SolitonParams { xi: 0.3, u: 0.4 };
        let t = tangent_fields(p, &g).unwrap();
        let h = 1e-5;
        let pair = |q| soliton_pair(q, &g).unwrap();
        let (xp, xm) = (pair(SolitonParams { xi: p.xi + h, ..p }), pair(SolitonParams { xi: p.xi - h, ..p }));
        let (up, um) = (pair(SolitonParams { u: p.u + h, ..p }), pair(SolitonParams { u: p.u - h, ..p }));
        let cd = |a: &Field, b: &Field| a.lin_comb(0.5 / h, b, -0.5 / h).unwrap();
        let err = |a: &Field, b: &Field| l2_norm(&a.lin_comb(1.0, b, -1.0).unwrap());
        assert!(err(&cd(xp.theta(), xm.theta()), &t.xi_theta) < 1e-8);
        assert!(err(&cd(xp.psi(), xm.psi()), &t.xi_psi) < 1e-8);
        assert!(err(&cd(up.theta(), um.theta()), &t.u_theta) < 1e-8);
        assert!(err(&cd(up.psi(), um.psi()), &t.u_psi) < 1e-8);
    }

    #[test]
    fn second_tangents_match_differences_of_tangents() {
        let g = grid(30.0, 0.02);
        for &u in &[-0.6, 0.3, 0.7] {
            let p = SolitonParams { xi: -0.2, u };
            let s = second_tangent_fields(p, &g).unwrap();
            let h = 1e-4;
            let tf = |q| tangent_fields(q, &g).unwrap();
            let xt = |q: SolitonParams| tf(q).xi_theta;
            let xp = |q: SolitonParams| tf(q).xi_psi;
            let ut = |q: SolitonParams| tf(q).u_theta;
            let up = |q: SolitonParams| tf(q).u_psi;
            assert!(rel_l2(&fd4(xt, p, true, h), &s.xixi_theta) < 1e-6);
            assert!(rel_l2(&fd4(xp, p, true, h), &s.xixi_psi) < 1e-6);
            assert!(rel_l2(&fd4(xt, p, false, h), &s.xiu_theta) < 1e-6);
            assert!(rel_l2(&fd4(ut, p, true, h), &s.xiu_theta) < 1e-6);
            assert!(rel_l2(&fd4(xp, p, false, h), &s.xiu_psi) < 1e-6);
            assert!(rel_l2(&fd4(up, p, true, h), &s.xiu_psi) < 1e-6);
            assert!(rel_l2(&fd4(ut, p, false, h), &s.uu_theta) < 1e-6);
            assert!(rel_l2(&fd4(up, p, false, h), &s.uu_psi) < 1e-6);
        }
    }

    #[test]
    fn pure_xi_second_derivative_is_chain_rule() {
        let g = grid(10.0, 0.05);
        let p = SolitonParams { xi: 0.5, u: 0.3 };
        let gm = gamma(0.3).unwrap();
        let s = second_tangent_fields(p, &g).unwrap();
        for (i, x) in g.nodes().enumerate() {
            let expect = kink_d2(gm * (x - 0.5)) * gm * gm;
            assert!((s.xixi_theta.values()[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn tangent_parity_at_rest() {
        let g = grid(40.0, 0.01);
        let t = tangent_fields(SolitonParams { xi: 0.0, u: 0.0 }, &g).unwrap();
        let dot = trapezoid_by(g.len(), g.dx(), |i| t.xi_theta.values()[i] * t.u_theta.values()[i]);
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn traveling_wave_shift() {
        // Shifting ξ by an integer number of cells shifts the samples.
        let g = grid(20.0, 0.05);
        let (u, k) = (0.4, 7usize);
        let a = soliton_pair(SolitonParams { xi: 0.0, u }, &g).unwrap();
        let b = soliton_pair(SolitonParams { xi: k as f64 * g.dx(), u }, &g).unwrap();
        for i in 0..g.len() - k {
            assert!((b.theta().values()[i + k] - a.theta().values()[i]).abs() < 1e-12);
            assert!((b.psi().values()[i + k] - a.psi().values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn constants() {
        let kc = kink_constants(40.0, 0.005).unwrap();
        assert!((kc.i1 - 2.0 * PI).abs() < 1e-10);
        assert!((kc.m - 8.0).abs() < 1e-10);
        // ∫ x² sech x dx = π³/4
        assert!((kc.i2 - PI.powi(3) / 2.0).abs() < 1e-8);
        assert!(kink_constants(20.0, 0.005).is_err());
        assert!(kink_constants(40.0, 0.05).is_err());
        assert_eq!(KinkConstants::standard(), kc);
    }
}
