//! One implicit step of the H⁻¹ gradient flow: the coupled Cahn-Hilliard
//! system with Moreau-Yosida multipliers, solved by a semismooth Newton
//! method. Also houses the porous-drag interpolation α_ε, the double obstacle
//! potential ψ₀ and the relaxation multiplier λ_s.
//!
//! Time discretization: the implicit side carries the convex energy parts
//! (Dirichlet energy, penalties, α-term with nonnegative weight), the concave
//! part ψ₀ is taken explicitly, which makes the frozen-field energy decrease
//! for every step size.

use crate::fem::assembly::{self, p1_q};
use crate::fem::quadrature::{N_Q, TRI_Q};
use crate::fem::{ScalarFieldP1, VectorFieldP2};
use crate::la::{self, DirectLu, Triplets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChError {
    #[error("Newton did not converge in {iterations} iterations (residuals {first:.3e} -> {last:.3e})")]
    NewtonDiverged {
        iterations: usize,
        first: f64,
        last: f64,
        history: Vec<f64>,
    },
    #[error(transparent)]
    Linear(#[from] la::LaError),
}

/// Model constants of the gradient flow.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ChParams {
    /// Perimeter weight γ.
    pub gamma: f64,
    /// Interface scale ε.
    pub epsilon: f64,
    /// Moreau-Yosida penalty scale s.
    pub s: f64,
}

/// Double obstacle potential core ψ₀(φ) = (1 - φ²)/2.
#[inline]
pub fn psi0(phi: f64) -> f64 {
    0.5 * (1.0 - phi * phi)
}

#[inline]
pub fn psi0_prime(phi: f64) -> f64 {
    -phi
}

/// Relaxation multiplier λ_s(φ) = s max(0, φ-1) + s min(0, φ+1).
#[inline]
pub fn lambda_s(s: f64, phi: f64) -> f64 {
    s * (phi - 1.0).max(0.0) + s * (phi + 1.0).min(0.0)
}

/// Semismooth derivative selection: s outside the box, 0 inside and at the
/// kinks.
#[inline]
pub fn lambda_s_prime(s: f64, phi: f64) -> f64 {
    if phi > 1.0 || phi < -1.0 {
        s
    } else {
        0.0
    }
}

/// Quadratic Moreau-Yosida penalty density (s/2)(max(0,φ-1)² + min(0,φ+1)²).
#[inline]
pub fn penalty_density(s: f64, phi: f64) -> f64 {
    let over = (phi - 1.0).max(0.0);
    let under = (phi + 1.0).min(0.0);
    0.5 * s * (over * over + under * under)
}

/// Porous-drag interpolation α_ε(φ) = ᾱ/(2√ε) (1-φ) q/(φ+1+q), cut above
/// φ = 1 by a C¹ quadratic blend on [1, φ_c] and constant beyond.
///
/// The function is decreasing on [-1, φ_c] and convex on all of ℝ, α(1) = 0,
/// α(-1) = ᾱ/√ε, and bounded below by the (slightly negative) plateau value.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AlphaFunction {
    pub alpha_bar: f64,
    pub q: f64,
    pub epsilon: f64,
    pub phi_cut: f64,
}

impl AlphaFunction {
    pub fn new(alpha_bar: f64, q: f64, epsilon: f64) -> Self {
        Self {
            alpha_bar,
            q,
            epsilon,
            phi_cut: 1.1,
        }
    }

    /// Formula prefactor ᾱ/(2√ε).
    #[inline]
    fn scale(&self) -> f64 {
        self.alpha_bar / (2.0 * self.epsilon.sqrt())
    }

    /// Slope of the formula at φ = 1 (start of the blend).
    #[inline]
    fn slope_at_one(&self) -> f64 {
        -self.scale() * self.q / (2.0 + self.q)
    }

    /// Plateau value for φ ≥ φ_c; its magnitude is the bound δ on how far the
    /// extension dips below zero.
    pub fn plateau(&self) -> f64 {
        0.5 * self.slope_at_one() * (self.phi_cut - 1.0)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        if phi <= 1.0 {
            self.scale() * (1.0 - phi) * self.q / (phi + 1.0 + self.q)
        } else if phi < self.phi_cut {
            let d = phi - 1.0;
            let a2 = -self.slope_at_one() / (2.0 * (self.phi_cut - 1.0));
            self.slope_at_one() * d + a2 * d * d
        } else {
            self.plateau()
        }
    }

    pub fn prime(&self, phi: f64) -> f64 {
        if phi <= 1.0 {
            let d = phi + 1.0 + self.q;
            -self.scale() * self.q * (2.0 + self.q) / (d * d)
        } else if phi < self.phi_cut {
            let a2 = -self.slope_at_one() / (2.0 * (self.phi_cut - 1.0));
            self.slope_at_one() + 2.0 * a2 * (phi - 1.0)
        } else {
            0.0
        }
    }

    pub fn second(&self, phi: f64) -> f64 {
        if phi <= 1.0 {
            let d = phi + 1.0 + self.q;
            2.0 * self.scale() * self.q * (2.0 + self.q) / (d * d * d)
        } else if phi < self.phi_cut {
            -self.slope_at_one() / (self.phi_cut - 1.0)
        } else {
            0.0
        }
    }

    /// Largest value, attained at φ = -1: ᾱ/√ε.
    pub fn max_value(&self) -> f64 {
        self.alpha_bar / self.epsilon.sqrt()
    }
}

/// Order parameter and chemical potential of one time level.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub phi: ScalarFieldP1,
    pub w: ScalarFieldP1,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iters: 50,
            min_damping: 2f64.powi(-10),
        }
    }
}

/// The mixing-energy weight ½|u|² - u·q at the quadrature points of every
/// element; this is the field multiplying α_ε' in the gradient equation.
pub fn mixing_weight_table(u: &VectorFieldP2, q_adj: &VectorFieldP2) -> Vec<[f64; N_Q]> {
    let mesh = u.mesh();
    crate::exec::map_indexed(mesh.n_simplices(), |t| {
        let mut row = [0.0; N_Q];
        for (k, &([xi, eta], _)) in TRI_Q.iter().enumerate() {
            let uv = u.eval_ref(t, xi, eta);
            let qv = q_adj.eval_ref(t, xi, eta);
            row[k] = 0.5 * (uv[0] * uv[0] + uv[1] * uv[1]) - (uv[0] * qv[0] + uv[1] * qv[1]);
        }
        row
    })
}

/// One implicit step of the gradient flow with the velocity and adjoint
/// fields frozen. Solves the coupled system for (φ, w) by semismooth Newton
/// with residual-monotone damping; the returned state conserves ∫φ up to the
/// linear solver tolerance.
pub fn ch_step(
    prev: &PhaseState,
    u: &VectorFieldP2,
    q_adj: &VectorFieldP2,
    tau: f64,
    params: &ChParams,
    alpha: &AlphaFunction,
    opts: &NewtonOptions,
) -> Result<PhaseState, ChError> {
    assert!(tau > 0.0, "time increment must be positive");
    let mesh = prev.phi.mesh().clone();
    let n = mesh.n_vertices();

    let mass = assembly::p1_mass(&mesh);
    let stiff = assembly::p1_stiffness(&mesh);
    let mass_op = mass.build_symmetric()?;
    let stiff_op = stiff.build_symmetric()?;
    let g_table = mixing_weight_table(u, q_adj);

    let phi_at = |phi: &[f64], t: usize, qp: usize| -> f64 {
        let v = mesh.simplex(t);
        let s = p1_q(qp);
        s[0] * phi[v[0]] + s[1] * phi[v[1]] + s[2] * phi[v[2]]
    };

    let mut m_phi_k = vec![0.0; n];
    mass_op.apply(&prev.phi.values, &mut m_phi_k);
    let ge = params.gamma / params.epsilon;

    let residual = |phi: &[f64], w: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; 2 * n];
        // F1 = (1/tau) M (phi - phi_k) + K w
        let mut m_phi = vec![0.0; n];
        mass_op.apply(phi, &mut m_phi);
        let mut k_w = vec![0.0; n];
        stiff_op.apply(w, &mut k_w);
        for i in 0..n {
            r[i] = (m_phi[i] - m_phi_k[i]) / tau + k_w[i];
        }
        // F2 = γε K φ + (λ_s(φ) + α'(φ) G, v) - (γ/ε)(φ_k, v) - (w, v)
        let mut k_phi = vec![0.0; n];
        stiff_op.apply(phi, &mut k_phi);
        let mut m_w = vec![0.0; n];
        mass_op.apply(w, &mut m_w);
        let nl = assembly::p1_load(&mesh, |t, qp| {
            let p = phi_at(phi, t, qp);
            lambda_s(params.s, p) + alpha.prime(p) * g_table[t][qp]
        });
        for i in 0..n {
            r[n + i] =
                params.gamma * params.epsilon * k_phi[i] + nl[i] - ge * m_phi_k[i] - m_w[i];
        }
        r
    };

    let mut phi = prev.phi.values.clone();
    let mut w = prev.w.values.clone();
    let mut r = residual(&phi, &w);
    let r0 = la::norm2(&r);
    let target = opts.rel_tol * (1.0 + r0);
    let mut history = vec![r0];

    for _iter in 0..opts.max_iters {
        let rn = *history.last().unwrap();
        if rn <= target {
            return Ok(PhaseState {
                phi: ScalarFieldP1::new(mesh.clone(), phi),
                w: ScalarFieldP1::new(mesh.clone(), w),
            });
        }

        // Newton matrix [[M/tau, K], [γε K + W(φ), -M]]
        let weighted = assembly::p1_weighted_mass(&mesh, |t, qp| {
            let p = phi_at(&phi, t, qp);
            lambda_s_prime(params.s, p) + alpha.second(p) * g_table[t][qp]
        });
        let mut jac = Triplets::with_capacity(
            2 * n,
            2 * n,
            2 * mass.entries().len() + 2 * stiff.entries().len() + weighted.entries().len(),
        );
        for &(i, j, v) in mass.entries() {
            jac.push(i, j, v / tau);
            jac.push(n + i, n + j, -v);
        }
        for &(i, j, v) in stiff.entries() {
            jac.push(i, n + j, v);
            jac.push(n + i, j, params.gamma * params.epsilon * v);
        }
        for &(i, j, v) in weighted.entries() {
            jac.push(n + i, j, v);
        }
        let lu = DirectLu::factor(&jac.build()?)?;
        let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut delta);

        // residual-monotone damping with halving
        let mut damping = 1.0;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        while damping >= opts.min_damping {
            let phi_try: Vec<f64> = phi
                .iter()
                .zip(&delta[..n])
                .map(|(p, d)| p + damping * d)
                .collect();
            let w_try: Vec<f64> = w
                .iter()
                .zip(&delta[n..])
                .map(|(p, d)| p + damping * d)
                .collect();
            let r_try = residual(&phi_try, &w_try);
            let rt = la::norm2(&r_try);
            if best.as_ref().is_none_or(|(b, _, _, _)| rt < *b) {
                best = Some((rt, phi_try, w_try, r_try));
            }
            if rt < rn {
                break;
            }
            damping *= 0.5;
        }
        let (rt, phi_new, w_new, r_new) = best.unwrap();
        phi = phi_new;
        w = w_new;
        r = r_new;
        let _ = &r;
        history.push(rt);
    }

    if *history.last().unwrap() <= target {
        return Ok(PhaseState {
            phi: ScalarFieldP1::new(mesh.clone(), phi),
            w: ScalarFieldP1::new(mesh.clone(), w),
        });
    }
    Err(ChError::NewtonDiverged {
        iterations: opts.max_iters,
        first: history[0],
        last: *history.last().unwrap(),
        history,
    })
}

/// Free energy of the frozen-field Cahn-Hilliard system:
/// ∫ γε/2 |∇φ|² + (γ/ε) ψ₀(φ) + penalty + α_ε(φ)(½|u|² - u·q).
pub fn frozen_energy(
    phi: &ScalarFieldP1,
    u: &VectorFieldP2,
    q_adj: &VectorFieldP2,
    params: &ChParams,
    alpha: &AlphaFunction,
) -> f64 {
    let mesh = phi.mesh();
    let g_table = mixing_weight_table(u, q_adj);
    let ge = params.gamma / params.epsilon;
    crate::exec::sum_indexed(mesh.n_simplices(), |t| {
        let grad = phi.grad(t);
        let area = mesh.area(t);
        let mut acc =
            0.5 * params.gamma * params.epsilon * (grad[0] * grad[0] + grad[1] * grad[1]) * area;
        let det = 2.0 * area;
        let v = mesh.simplex(t);
        for (qp, &(_, wq)) in TRI_Q.iter().enumerate() {
            let s = p1_q(qp);
            let p = s[0] * phi.values[v[0]] + s[1] * phi.values[v[1]] + s[2] * phi.values[v[2]];
            acc += wq
                * det
                * (ge * psi0(p) + penalty_density(params.s, p) + alpha.eval(p) * g_table[t][qp]);
        }
        acc
    })
}

/// Assembled gradient of the relaxed reduced objective against every P1
/// basis function:
/// g_j = (½α'(φ)|u|² - α'(φ)u·q + (γ/ε)ψ₀'(φ) + λ_s(φ), N_j) + γε(∇φ, ∇N_j).
///
/// With the adjoint from the consistent (transposed) linearization this is
/// the exact derivative of the discrete reduced objective.
pub fn objective_gradient(
    phi: &ScalarFieldP1,
    u: &VectorFieldP2,
    q_adj: &VectorFieldP2,
    params: &ChParams,
    alpha: &AlphaFunction,
) -> Vec<f64> {
    let mesh = phi.mesh().clone();
    let g_table = mixing_weight_table(u, q_adj);
    let mut grad = assembly::p1_load(&mesh, |t, qp| {
        let v = mesh.simplex(t);
        let s = p1_q(qp);
        let p = s[0] * phi.values[v[0]] + s[1] * phi.values[v[1]] + s[2] * phi.values[v[2]];
        alpha.prime(p) * g_table[t][qp]
            + params.gamma / params.epsilon * psi0_prime(p)
            + lambda_s(params.s, p)
    });
    let stiff = assembly::p1_stiffness(&mesh).build_symmetric().unwrap();
    let mut k_phi = vec![0.0; mesh.n_vertices()];
    stiff.apply(&phi.values, &mut k_phi);
    for i in 0..mesh.n_vertices() {
        grad[i] += params.gamma * params.epsilon * k_phi[i];
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, Rect};
    use std::sync::Arc;

    fn params() -> ChParams {
        ChParams {
            gamma: 0.1,
            epsilon: 0.005,
            s: 1e6,
        }
    }

    #[test]
    fn alpha_reference_values() {
        let a = AlphaFunction::new(50.0, 10.0, 0.005);
        assert!(a.eval(1.0).abs() < 1e-12);
        assert!((a.eval(-1.0) - 50.0 / 0.005f64.sqrt()).abs() < 1e-9);
        assert!((a.eval(-1.0) - 707.10678).abs() < 1e-4);
        assert!((a.eval(0.0) - 321.4122).abs() < 1e-4);
    }

    #[test]
    fn alpha_zero_scale_vanishes() {
        let a = AlphaFunction::new(0.0, 10.0, 0.005);
        for phi in [-1.5, -1.0, 0.0, 1.0, 1.05, 2.0] {
            assert_eq!(a.eval(phi), 0.0);
            assert_eq!(a.prime(phi), 0.0);
        }
    }

    #[test]
    fn alpha_c1_at_blend_points() {
        let a = AlphaFunction::new(50.0, 10.0, 0.005);
        for x in [1.0, a.phi_cut] {
            let h = 1e-7;
            let left = (a.eval(x) - a.eval(x - h)) / h;
            let right = (a.eval(x + h) - a.eval(x)) / h;
            assert!(
                (left - right).abs() < 1e-4 * a.max_value(),
                "kink at {x}: {left} vs {right}"
            );
        }
        // plateau beyond the cut
        assert_eq!(a.eval(a.phi_cut + 0.5), a.eval(a.phi_cut));
        assert!((a.plateau() - a.eval(2.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_monotone_and_convex() {
        let a = AlphaFunction::new(50.0, 10.0, 0.005);
        let mut prev_val = f64::INFINITY;
        let mut prev_slope = f64::NEG_INFINITY;
        let mut x = -1.0;
        while x <= 1.5 {
            let v = a.eval(x);
            let s = a.prime(x);
            assert!(v <= prev_val + 1e-12, "not decreasing at {x}");
            assert!(s >= prev_slope - 1e-9, "slope not nondecreasing at {x}");
            assert!(v >= -a.plateau().abs() - 1e-12);
            prev_val = v;
            prev_slope = s;
            x += 0.01;
        }
    }

    #[test]
    fn alpha_derivatives_match_fd() {
        let a = AlphaFunction::new(50.0, 10.0, 0.005);
        for x in [-1.3, -0.5, 0.0, 0.7, 1.05, 1.3] {
            let h = 1e-6;
            let fd = (a.eval(x + h) - a.eval(x - h)) / (2.0 * h);
            assert!((fd - a.prime(x)).abs() < 1e-3);
            let fd2 = (a.prime(x + h) - a.prime(x - h)) / (2.0 * h);
            assert!((fd2 - a.second(x)).abs() < 1e-2 * (1.0 + a.second(x).abs()));
        }
    }

    #[test]
    fn lambda_values() {
        let s = 1e6;
        assert_eq!(lambda_s(s, 0.0), 0.0);
        assert_eq!(lambda_s(s, 1.5), 5e5);
        assert!((lambda_s(s, -1.2) + 2e5).abs() < 1e-6);
        assert_eq!(lambda_s_prime(s, 0.999), 0.0);
        assert_eq!(lambda_s_prime(s, 1.0), 0.0);
        assert_eq!(lambda_s_prime(s, 1.0000001), s);
    }

    #[test]
    fn lambda_monotone() {
        let s = 1e6;
        let mut seed = 99u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64 / 2f64.powi(31) - 0.5) * 6.0
        };
        for _ in 0..1000 {
            let a = rnd();
            let b = rnd();
            assert!((lambda_s(s, a) - lambda_s(s, b)) * (a - b) >= 0.0);
        }
    }

    #[test]
    fn constant_state_is_stationary() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.02).unwrap());
        let beta = 0.3;
        let prev = PhaseState {
            phi: ScalarFieldP1::constant(mesh.clone(), beta),
            w: ScalarFieldP1::constant(mesh.clone(), 0.0),
        };
        let u = VectorFieldP2::zero(mesh.clone());
        let q = VectorFieldP2::zero(mesh.clone());
        let alpha = AlphaFunction::new(0.0, 10.0, 0.005);
        let next = ch_step(&prev, &u, &q, 1.0, &params(), &alpha, &Default::default()).unwrap();
        for i in 0..mesh.n_vertices() {
            assert!((next.phi.values[i] - beta).abs() < 1e-9);
        }
        assert!(next.w.h1_seminorm_sq().sqrt() < 1e-9);
    }

    #[test]
    fn mass_conserved() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.02).unwrap());
        let prev = PhaseState {
            phi: ScalarFieldP1::from_fn(mesh.clone(), |x, y| {
                (2.0 * std::f64::consts::PI * x).sin() * 0.8 * (y - 0.5)
            }),
            w: ScalarFieldP1::constant(mesh.clone(), 0.0),
        };
        let u = VectorFieldP2::from_fn(mesh.clone(), |x, y| [y, x]);
        let q = VectorFieldP2::zero(mesh.clone());
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let m0 = prev.phi.integral();
        let next = ch_step(&prev, &u, &q, 0.1, &params(), &alpha, &Default::default()).unwrap();
        let m1 = next.phi.integral();
        assert!(
            (m1 - m0).abs() <= 1e-10,
            "mass drift {:.3e}",
            (m1 - m0).abs()
        );
    }

    #[test]
    fn frozen_energy_reference_values() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.05).unwrap());
        let u = VectorFieldP2::zero(mesh.clone());
        let q = VectorFieldP2::zero(mesh.clone());
        let p = params();
        let alpha = AlphaFunction::new(50.0, 10.0, p.epsilon);

        // φ ≡ 1: every term vanishes
        let phi1 = ScalarFieldP1::constant(mesh.clone(), 1.0);
        assert!(frozen_energy(&phi1, &u, &q, &p, &alpha).abs() < 1e-12);

        // φ ≡ β: (γ/ε)|Ω|(1-β²)/2
        let beta = 0.4;
        let phib = ScalarFieldP1::constant(mesh.clone(), beta);
        let want = p.gamma / p.epsilon * (1.0 - beta * beta) / 2.0;
        let got = frozen_energy(&phib, &u, &q, &p, &alpha);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));

        // φ ≡ 1.1: penalty (s/2)(0.1)²|Ω| plus (γ/ε)|Ω|(1-1.21)/2 (u = 0, so
        // the α plateau contributes nothing)
        let phio = ScalarFieldP1::constant(mesh.clone(), 1.1);
        let want = 0.5 * p.s * (1.1f64 - 1.0).powi(2) + p.gamma / p.epsilon * (1.0 - 1.21) / 2.0;
        let got = frozen_energy(&phio, &u, &q, &p, &alpha);
        assert!(
            (got - want).abs() < 1e-9 * want.abs(),
            "got {got}, want {want}"
        );
    }

    #[test]
    fn step_profile_relaxes_with_monotone_energy() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::new(0.0, 0.0, 1.0, 0.1), 4e-4).unwrap());
        let u = VectorFieldP2::zero(mesh.clone());
        let q = VectorFieldP2::zero(mesh.clone());
        let p = ChParams {
            gamma: 1.0,
            epsilon: 0.05,
            s: 1e6,
        };
        let alpha = AlphaFunction::new(0.0, 10.0, p.epsilon);
        let mut state = PhaseState {
            phi: ScalarFieldP1::from_fn(mesh.clone(), |x, _| if x < 0.5 { -1.0 } else { 1.0 }),
            w: ScalarFieldP1::constant(mesh.clone(), 0.0),
        };
        let mut energy = frozen_energy(&state.phi, &u, &q, &p, &alpha);
        for _ in 0..10 {
            state = ch_step(&state, &u, &q, 0.01, &p, &alpha, &Default::default()).unwrap();
            let e = frozen_energy(&state.phi, &u, &q, &p, &alpha);
            assert!(e <= energy + 1e-9 * (1.0 + energy.abs()), "{e} > {energy}");
            energy = e;
        }
        let max = state.phi.values.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max <= 1.0 + 1e-3);
    }
}
