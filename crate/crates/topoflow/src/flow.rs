//! Penalized Navier-Stokes state solves and the adjoint Oseen solves on the
//! Taylor-Hood pair, sharing one saddle-point kernel.
//!
//! Unknown layout of the saddle system: velocity dofs first (interleaved P2),
//! then the P1 pressure, then one Lagrange multiplier enforcing ∫p = 0.
//! Dirichlet velocity dofs are eliminated symmetrically.
//!
//! The nonlinearity is resolved by an Oseen iteration: the transport in
//! (u·∇)u is frozen at the previous iterate and the linear saddle system is
//! re-solved until the relative nonlinear residual is small. Each linear
//! system goes either to the sparse direct factorization or to restarted
//! GMRES with a block upper-triangular preconditioner whose momentum block is
//! inverted by the direct factorization.

use crate::chstep::AlphaFunction;
use crate::fem::assembly::{self, p1_q};
use crate::fem::quadrature::N_Q;
use crate::fem::{n_p2_nodes, DirichletTrace, FemError, ScalarFieldP1, VectorFieldP2};
use crate::la::{
    self, apply_dirichlet, gmres, DirectLu, GmresOptions, Preconditioner, SparseOperator, Triplets,
};
use crate::mesh::Mesh;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Config(#[from] FemError),
    #[error("incompatible boundary data: net flux {flux:.3e} exceeds tolerance {tol:.3e}")]
    IncompatibleBoundary { flux: f64, tol: f64 },
    #[error(transparent)]
    Linear(#[from] la::LaError),
    #[error("Oseen iteration did not converge: residuals {history:?}")]
    OseenNonConvergence {
        history: Vec<f64>,
        last: Box<FlowState>,
    },
}

/// Velocity and pressure of the penalized state system.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: VectorFieldP2,
    pub p: ScalarFieldP1,
}

/// Adjoint velocity (zero trace) and adjoint pressure.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub q: VectorFieldP2,
    pub pi: ScalarFieldP1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolverKind {
    /// Sparse LU of the full saddle system.
    Direct,
    /// Restarted GMRES with the block triangular preconditioner.
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    NavierStokes,
    /// Drop the convection term entirely.
    Stokes,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OseenOptions {
    /// Relative nonlinear residual at which the fixed point stops.
    pub tol: f64,
    pub max_sweeps: usize,
    pub solver: LinearSolverKind,
    pub model: FlowModel,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    pub gmres_tol: f64,
}

impl Default for OseenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 50,
            solver: LinearSolverKind::Direct,
            model: FlowModel::NavierStokes,
            gmres_restart: 30,
            gmres_max_iters: 2000,
            gmres_tol: 1e-11,
        }
    }
}

impl OseenOptions {
    pub fn stokes() -> Self {
        Self {
            model: FlowModel::Stokes,
            ..Self::default()
        }
    }
}

/// Shared pieces of one saddle-point problem on a fixed mesh and phase field.
struct SaddleProblem {
    mesh: Arc<Mesh>,
    nu: usize,
    np: usize,
    mu: f64,
    /// α-weighted vector mass + μ vector stiffness (momentum block, no bc).
    base_momentum: Triplets,
    /// Divergence coupling and mean constraint assembled into full layout.
    coupling: Triplets,
    /// Dirichlet constraints mapped to full-layout dofs.
    constraints: Vec<(usize, f64)>,
    /// (α M + μ A) as an operator, for residuals and adjoint sources.
    mass_alpha_mu: SparseOperator,
    /// α at the quadrature points, kept for the Schur approximation.
    alpha_table: Vec<[f64; N_Q]>,
}

impl SaddleProblem {
    fn dim(&self) -> usize {
        self.nu + self.np + 1
    }

    fn new(
        phi: &ScalarFieldP1,
        trace: &DirichletTrace,
        mu: f64,
        alpha: &AlphaFunction,
    ) -> Result<Self, FlowError> {
        let mesh = phi.mesh().clone();
        let nu = 2 * n_p2_nodes(&mesh);
        let np = mesh.n_vertices();
        let dim = nu + np + 1;

        let alpha_table: Vec<[f64; N_Q]> =
            crate::exec::map_indexed(mesh.n_simplices(), |t| {
                let v = mesh.simplex(t);
                let mut row = [0.0; N_Q];
                for (qp, slot) in row.iter_mut().enumerate() {
                    let s = p1_q(qp);
                    *slot = alpha.eval(
                        s[0] * phi.values[v[0]]
                            + s[1] * phi.values[v[1]]
                            + s[2] * phi.values[v[2]],
                    );
                }
                row
            });

        let mut base_momentum = Triplets::new(dim, dim);
        let alpha_mass = assembly::vector_mass_weighted(&mesh, |t, qp| alpha_table[t][qp]);
        let stiff = assembly::vector_stiffness(&mesh);
        for &(i, j, v) in alpha_mass.entries() {
            base_momentum.push(i, j, v);
        }
        for &(i, j, v) in stiff.entries() {
            base_momentum.push(i, j, mu * v);
        }
        let mut m_op = Triplets::new(nu, nu);
        m_op.append_from(&alpha_mass, 0, 0, 1.0);
        m_op.append_from(&stiff, 0, 0, mu);

        let div = assembly::divergence(&mesh);
        let mut coupling = Triplets::new(dim, dim);
        for &(i, j, v) in div.entries() {
            coupling.push(nu + i, j, v); // B
            coupling.push(j, nu + i, v); // Bᵀ
        }
        let mean = assembly::p1_integral_weights(&mesh);
        for (i, &c) in mean.iter().enumerate() {
            coupling.push(dim - 1, nu + i, c);
            coupling.push(nu + i, dim - 1, c);
        }

        let constraints: Vec<(usize, f64)> = trace
            .nodes
            .iter()
            .flat_map(|&(node, v)| [(2 * node, v[0]), (2 * node + 1, v[1])])
            .collect();

        Ok(Self {
            mesh,
            nu,
            np,
            mu,
            base_momentum,
            coupling,
            constraints,
            mass_alpha_mu: m_op.build()?,
            alpha_table,
        })
    }

    /// Assemble the full constrained system with the given extra momentum
    /// triplets (convection and friends) and right-hand side.
    fn assemble(
        &self,
        extra_momentum: &[Triplets],
        rhs_u: &[f64],
    ) -> Result<(SparseOperator, Vec<f64>), FlowError> {
        let dim = self.dim();
        let mut trips = Triplets::with_capacity(
            dim,
            dim,
            self.base_momentum.entries().len()
                + self.coupling.entries().len()
                + extra_momentum.iter().map(|t| t.entries().len()).sum::<usize>(),
        );
        trips.append(&self.base_momentum);
        trips.append(&self.coupling);
        for extra in extra_momentum {
            // extra blocks live on the velocity dofs only
            for &(i, j, v) in extra.entries() {
                trips.push(i, j, v);
            }
        }
        let mut rhs = vec![0.0; dim];
        rhs[..self.nu].copy_from_slice(rhs_u);
        let trips = apply_dirichlet(&trips, &mut rhs, &self.constraints);
        Ok((trips.build()?, rhs))
    }

    fn solve(
        &self,
        op: &SparseOperator,
        rhs: &[f64],
        x0: Option<&[f64]>,
        opts: &OseenOptions,
    ) -> Result<Vec<f64>, FlowError> {
        match opts.solver {
            LinearSolverKind::Direct => {
                let lu = DirectLu::factor(op)?;
                Ok(lu.solve(rhs))
            }
            LinearSolverKind::Gmres => {
                let pre = BlockTriangularPrecond::build(self, op, opts)?;
                let mut x = match x0 {
                    Some(x0) => x0.to_vec(),
                    None => vec![0.0; rhs.len()],
                };
                gmres(
                    op,
                    &pre,
                    rhs,
                    &mut x,
                    &GmresOptions {
                        restart: opts.gmres_restart,
                        max_iters: opts.gmres_max_iters,
                        rel_tol: opts.gmres_tol,
                    },
                )?;
                Ok(x)
            }
        }
    }

    fn split(&self, x: Vec<f64>) -> (VectorFieldP2, ScalarFieldP1) {
        let u = VectorFieldP2::new(self.mesh.clone(), x[..self.nu].to_vec());
        let p = ScalarFieldP1::new(self.mesh.clone(), x[self.nu..self.nu + self.np].to_vec());
        (u, p)
    }
}

/// Block upper-triangular preconditioner for the saddle system:
/// momentum block inverted by the direct factorization, pressure Schur
/// complement approximated by μ M_p⁻¹ plus a weighted pressure Laplacian
/// (bordered by the mean constraint), multiplier dof passed through.
struct BlockTriangularPrecond {
    nu: usize,
    np: usize,
    momentum_lu: DirectLu,
    pressure_mass_lu: DirectLu,
    pressure_lap_lu: DirectLu,
    mu: f64,
    b_t: SparseOperator,
}

impl BlockTriangularPrecond {
    fn build(
        prob: &SaddleProblem,
        full_op: &SparseOperator,
        _opts: &OseenOptions,
    ) -> Result<Self, FlowError> {
        let (nu, np) = (prob.nu, prob.np);
        // momentum block (with Dirichlet identity rows) out of the full matrix
        let mut mom = Triplets::new(nu, nu);
        let mut b_t = Triplets::new(nu, np);
        for (i, j, v) in full_op.iter() {
            if i < nu && j < nu {
                mom.push(i, j, v);
            } else if i < nu && j >= nu && j < nu + np {
                b_t.push(i, j - nu, v);
            }
        }
        let momentum_lu = DirectLu::factor(&mom.build()?)?;

        let mesh = &prob.mesh;
        let p_mass = assembly::p1_mass(mesh).build()?;
        let pressure_mass_lu = DirectLu::factor(&p_mass)?;

        // Schur approximation for the reaction-dominated part: pressure
        // Laplacian weighted by 1/(α + μ), bordered by the mean constraint.
        let weighted_lap = weighted_pressure_laplacian(mesh, &prob.alpha_table, prob.mu);
        let mean = assembly::p1_integral_weights(mesh);
        let mut bordered = Triplets::new(np + 1, np + 1);
        bordered.append_from(&weighted_lap, 0, 0, 1.0);
        for (i, &c) in mean.iter().enumerate() {
            bordered.push(np, i, c);
            bordered.push(i, np, c);
        }
        let pressure_lap_lu = DirectLu::factor(&bordered.build()?)?;

        Ok(Self {
            nu,
            np,
            momentum_lu,
            pressure_mass_lu,
            pressure_lap_lu,
            mu: prob.mu,
            b_t: b_t.build()?,
        })
    }
}

/// Pressure Laplacian with coefficient 1/(α(x) + μ); the element coefficient
/// uses the quadrature average of α.
fn weighted_pressure_laplacian(mesh: &Mesh, alpha_table: &[[f64; N_Q]], mu: f64) -> Triplets {
    use crate::fem::basis::{ElemGeom, P1_GRAD_REF};
    let n = mesh.n_vertices();
    let locals = crate::exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let verts = mesh.simplex(t);
        let alpha_avg = alpha_table[t].iter().sum::<f64>() / N_Q as f64;
        let w = 1.0 / (alpha_avg + mu);
        let g: Vec<[f64; 2]> = P1_GRAD_REF.iter().map(|&gr| geom.phys_grad(gr)).collect();
        let area = 0.5 * geom.det;
        let mut m = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = w * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        (verts, m)
    });
    let mut trips = Triplets::with_capacity(n, n, 9 * locals.len());
    for (verts, m) in locals {
        for i in 0..3 {
            for j in 0..3 {
                trips.push(verts[i], verts[j], m[i][j]);
            }
        }
    }
    trips
}

impl Preconditioner for BlockTriangularPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (nu, np) = (self.nu, self.np);
        // pressure: ẑ_p = -(μ M_p⁻¹ + A_p,bordered⁻¹) r_p
        let r_p = &r[nu..nu + np];
        let mut zp = self.pressure_mass_lu.solve(r_p);
        for v in zp.iter_mut() {
            *v *= self.mu;
        }
        let mut rb = vec![0.0; np + 1];
        rb[..np].copy_from_slice(r_p);
        self.pressure_lap_lu.solve_in_place(&mut rb);
        for i in 0..np {
            zp[i] = -(zp[i] + rb[i]);
        }
        // velocity: z_u = F⁻¹ (r_u - Bᵀ z_p)
        let mut ru = r[..nu].to_vec();
        let mut btzp = vec![0.0; nu];
        self.b_t.apply(&zp, &mut btzp);
        for i in 0..nu {
            ru[i] -= btzp[i];
        }
        self.momentum_lu.solve_in_place(&mut ru);
        z[..nu].copy_from_slice(&ru);
        z[nu..nu + np].copy_from_slice(&zp);
        // multiplier passed through
        z[nu + np] = r[nu + np];
    }
}

fn check_compatibility(trace: &DirichletTrace, mesh: &Mesh) -> Result<(), FlowError> {
    let flux = trace.net_flux(mesh);
    let perimeter = 2.0 * (mesh.extent().width() + mesh.extent().height());
    let tol = 1e-10 * (trace.max_speed() * perimeter).max(1.0);
    if flux.abs() > tol {
        return Err(FlowError::IncompatibleBoundary {
            flux,
            tol,
        });
    }
    Ok(())
}

/// Solve the penalized stationary Navier-Stokes system for the phase field
/// `phi` with Dirichlet trace `g`. The Oseen iteration starts from the
/// Stokes (transport-free) solution; the returned state satisfies the
/// boundary trace exactly at the boundary nodes and has mean-zero pressure.
pub fn solve_state(
    phi: &ScalarFieldP1,
    g: &DirichletTrace,
    mu: f64,
    alpha: &AlphaFunction,
    opts: &OseenOptions,
) -> Result<FlowState, FlowError> {
    solve_state_forced(phi, g, mu, alpha, opts, None)
}

/// [`solve_state`] with an optional body force (used by manufactured-solution
/// tests; the optimization always runs force-free).
pub fn solve_state_forced(
    phi: &ScalarFieldP1,
    g: &DirichletTrace,
    mu: f64,
    alpha: &AlphaFunction,
    opts: &OseenOptions,
    force: Option<&(dyn Fn(f64, f64) -> [f64; 2] + Sync)>,
) -> Result<FlowState, FlowError> {
    let mesh = phi.mesh().clone();
    check_compatibility(g, &mesh)?;
    let prob = SaddleProblem::new(phi, g, mu, alpha)?;

    let rhs_u = match force {
        Some(f) => assembly::vector_load(&mesh, |t, qp| {
            let p = assembly::quad_point(&mesh, t, qp);
            f(p[0], p[1])
        }),
        None => vec![0.0; prob.nu],
    };

    // Stokes sweep: no transport.
    let (op, rhs) = prob.assemble(&[], &rhs_u)?;
    let rhs_norm = la::norm2(&rhs).max(f64::MIN_POSITIVE);
    let mut x = prob.solve(&op, &rhs, None, opts)?;

    if matches!(opts.model, FlowModel::Stokes) {
        let (u, p) = prob.split(x);
        return Ok(FlowState { u, p });
    }

    let mut history: Vec<f64> = Vec::new();
    let mut growth_streak = 0usize;
    for _sweep in 0..opts.max_sweeps {
        let (u, _) = prob.split(x.clone());
        let conv = assembly::convection(&prob.mesh, &u);
        let (op, rhs) = prob.assemble(&[conv], &rhs_u)?;
        // A(u_j) x_j - b is exactly the nonlinear residual of x_j
        let mut ax = vec![0.0; prob.dim()];
        op.apply(&x, &mut ax);
        let res = ax
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / rhs_norm;
        if res <= opts.tol {
            let (u, p) = prob.split(x);
            return Ok(FlowState { u, p });
        }
        if let Some(&prev) = history.last() {
            growth_streak = if res > prev { growth_streak + 1 } else { 0 };
            if growth_streak >= 5 {
                let (u, p) = prob.split(x);
                history.push(res);
                return Err(FlowError::OseenNonConvergence {
                    history,
                    last: Box::new(FlowState { u, p }),
                });
            }
        }
        history.push(res);
        x = prob.solve(&op, &rhs, Some(&x), opts)?;
    }

    // verify the final iterate before giving up
    let (u, _) = prob.split(x.clone());
    let conv = assembly::convection(&prob.mesh, &u);
    let (op, rhs) = prob.assemble(&[conv], &rhs_u)?;
    let mut ax = vec![0.0; prob.dim()];
    op.apply(&x, &mut ax);
    let res = ax
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / rhs_norm;
    let (u, p) = prob.split(x);
    if res <= opts.tol {
        return Ok(FlowState { u, p });
    }
    history.push(res);
    Err(FlowError::OseenNonConvergence {
        history,
        last: Box::new(FlowState { u, p }),
    })
}

/// Right-hand side of the adjoint momentum equation: (α u, ψ) + μ(∇u, ∇ψ),
/// assembled through the same operators that define the state system.
fn adjoint_rhs(prob: &SaddleProblem, u: &VectorFieldP2) -> Vec<f64> {
    let mut rhs = vec![0.0; prob.nu];
    prob.mass_alpha_mu.apply_add(&u.values, &mut rhs);
    rhs
}

/// Solve the lagged adjoint Oseen system: the transport term enters as
/// -(u·∇)q and the linearization term (∇u)ᵀ q is taken from `q_prev`
/// (the adjoint of the previous time level).
pub fn solve_adjoint(
    phi: &ScalarFieldP1,
    state: &FlowState,
    q_prev: &VectorFieldP2,
    mu: f64,
    alpha: &AlphaFunction,
    opts: &OseenOptions,
) -> Result<AdjointState, FlowError> {
    let mesh = phi.mesh().clone();
    let zero_trace = homogeneous_trace(&mesh);
    let prob = SaddleProblem::new(phi, &zero_trace, mu, alpha)?;

    let mut rhs_u = adjoint_rhs(&prob, &state.u);
    // lagged term: -((∇u)ᵀ q_prev, ψ_i) = -[R(u)ᵀ q_prev]_i
    let reaction = assembly::convection_reaction(&mesh, &state.u).build()?;
    let mut lag = vec![0.0; prob.nu];
    reaction.apply_transpose(&q_prev.values, &mut lag);
    for i in 0..prob.nu {
        rhs_u[i] -= lag[i];
    }

    let extra = if matches!(opts.model, FlowModel::Stokes) {
        vec![]
    } else {
        let mut neg_conv = assembly::convection(&mesh, &state.u);
        neg_conv.scale(-1.0);
        vec![neg_conv]
    };
    let (op, rhs) = prob.assemble(&extra, &rhs_u)?;
    let x = prob.solve(&op, &rhs, None, opts)?;
    let (q, pi) = prob.split(x);
    Ok(AdjointState { q, pi })
}

/// Solve the adjoint system of the exact discrete linearization: the system
/// matrix is the transpose of the state Jacobian (convection and reaction
/// blocks transposed, no time lag). The gradient assembled from this adjoint
/// matches finite differences of the discrete reduced objective to solver
/// accuracy.
pub fn solve_adjoint_consistent(
    phi: &ScalarFieldP1,
    state: &FlowState,
    mu: f64,
    alpha: &AlphaFunction,
    opts: &OseenOptions,
) -> Result<AdjointState, FlowError> {
    let mesh = phi.mesh().clone();
    let zero_trace = homogeneous_trace(&mesh);
    let prob = SaddleProblem::new(phi, &zero_trace, mu, alpha)?;
    let rhs_u = adjoint_rhs(&prob, &state.u);

    let extra = if matches!(opts.model, FlowModel::Stokes) {
        vec![]
    } else {
        let conv = assembly::convection(&mesh, &state.u).transposed();
        let reaction = assembly::convection_reaction(&mesh, &state.u).transposed();
        vec![conv, reaction]
    };
    let (op, rhs) = prob.assemble(&extra, &rhs_u)?;
    let x = prob.solve(&op, &rhs, None, opts)?;
    let (q, pi) = prob.split(x);
    Ok(AdjointState { q, pi })
}

/// Zero-velocity trace on all boundary P2 nodes.
pub fn homogeneous_trace(mesh: &Mesh) -> DirichletTrace {
    crate::fem::interpolate_boundary(&crate::fem::DirichletData::NoSlip, mesh)
        .expect("no-slip data is always valid")
}

/// Report of the smallness condition guaranteeing uniqueness of the state.
#[derive(Debug, Clone, Copy)]
pub struct UniquenessReport {
    /// ‖∇u‖_{L²(Ω)}.
    pub grad_norm: f64,
    /// μ / K_Ω with K_Ω = 0.5 √|Ω| (two dimensions).
    pub bound: f64,
    pub satisfied: bool,
}

pub fn check_uniqueness(state: &FlowState, mu: f64) -> UniquenessReport {
    let grad_norm = state.u.h1_seminorm_sq().sqrt();
    let k_omega = 0.5 * state.u.mesh().extent().area().sqrt();
    let bound = mu / k_omega;
    UniquenessReport {
        grad_norm,
        bound,
        satisfied: grad_norm < bound,
    }
}

/// l² norm of the discrete divergence residual (tested against every P1
/// pressure function). Exact solutions leave only the linear solver residual.
pub fn divergence_residual(state: &FlowState) -> f64 {
    let mesh = state.u.mesh();
    let div = assembly::divergence(mesh).build().expect("divergence assembly");
    let mut r = vec![0.0; mesh.n_vertices()];
    div.apply(&state.u.values, &mut r);
    la::norm2(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{BoundaryProfile, DirichletData};
    use crate::mesh::{build_rectangle_mesh, Rect, Side};

    fn unit_mesh(area: f64) -> Arc<Mesh> {
        Arc::new(build_rectangle_mesh(Rect::unit(), area).unwrap())
    }

    fn poiseuille_data() -> DirichletData {
        DirichletData::Profiles(vec![
            BoundaryProfile {
                side: Side::XMin,
                center: 0.5,
                width: 1.0,
                height: 1.0,
                normal: -1.0,
                tangential: 0.0,
            },
            BoundaryProfile {
                side: Side::XMax,
                center: 0.5,
                width: 1.0,
                height: 1.0,
                normal: 1.0,
                tangential: 0.0,
            },
        ])
    }

    #[test]
    fn closed_cavity_zero_data_gives_zero_flow() {
        let mesh = unit_mesh(0.02);
        let phi = ScalarFieldP1::constant(mesh.clone(), -1.0);
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let g = homogeneous_trace(&mesh);
        let state = solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::default()).unwrap();
        assert!(state.u.l2_norm() < 1e-12);
        assert!(state.p.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn poiseuille_exact_in_p2() {
        let mesh = unit_mesh(0.02);
        let phi = ScalarFieldP1::constant(mesh.clone(), 1.0);
        let alpha = AlphaFunction::new(0.0, 10.0, 0.005);
        let g = crate::fem::interpolate_boundary(&poiseuille_data(), &mesh).unwrap();
        let state = solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::stokes()).unwrap();
        let exact = VectorFieldP2::from_fn(mesh.clone(), |_, y| [4.0 * y * (1.0 - y), 0.0]);
        let diff: f64 = state
            .u
            .values
            .iter()
            .zip(&exact.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10, "velocity differs from interpolant by {diff:.3e}");
        // mean-zero pressure and linear-in-x pressure: p = -8μ(x - 1/2)
        let p_exact = ScalarFieldP1::from_fn(mesh.clone(), |x, _| -8.0 * (x - 0.5));
        let pdiff = state
            .p
            .values
            .iter()
            .zip(&p_exact.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(pdiff < 1e-9, "pressure differs by {pdiff:.3e}");
        assert!(state.p.integral().abs() < 1e-10);
    }

    #[test]
    fn navier_stokes_poiseuille_is_also_exact() {
        // Poiseuille solves full Navier-Stokes too ((u·∇)u ⟂ ∇p both linear in x)
        let mesh = unit_mesh(0.05);
        let phi = ScalarFieldP1::constant(mesh.clone(), 1.0);
        let alpha = AlphaFunction::new(0.0, 10.0, 0.005);
        let g = crate::fem::interpolate_boundary(&poiseuille_data(), &mesh).unwrap();
        let state = solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::default()).unwrap();
        let exact = VectorFieldP2::from_fn(mesh.clone(), |_, y| [4.0 * y * (1.0 - y), 0.0]);
        let diff: f64 = state
            .u
            .values
            .iter()
            .zip(&exact.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-7, "velocity differs by {diff:.3e}");
    }

    #[test]
    fn divergence_residual_small() {
        let mesh = unit_mesh(0.02);
        let phi = ScalarFieldP1::constant(mesh.clone(), 1.0);
        let alpha = AlphaFunction::new(0.0, 10.0, 0.005);
        let g = crate::fem::interpolate_boundary(&poiseuille_data(), &mesh).unwrap();
        let state = solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::default()).unwrap();
        assert!(divergence_residual(&state) < 1e-10);
    }

    #[test]
    fn incompatible_data_rejected() {
        let mesh = unit_mesh(0.05);
        let phi = ScalarFieldP1::constant(mesh.clone(), 1.0);
        let alpha = AlphaFunction::new(0.0, 10.0, 0.005);
        // inflow with no outflow
        let data = DirichletData::Profiles(vec![BoundaryProfile {
            side: Side::XMin,
            center: 0.5,
            width: 0.5,
            height: 1.0,
            normal: -1.0,
            tangential: 0.0,
        }]);
        let g = crate::fem::interpolate_boundary(&data, &mesh).unwrap();
        assert!(matches!(
            solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::default()),
            Err(FlowError::IncompatibleBoundary { .. })
        ));
    }

    #[test]
    fn uniqueness_report_values() {
        let mesh = unit_mesh(0.05);
        let state = FlowState {
            u: VectorFieldP2::zero(mesh.clone()),
            p: ScalarFieldP1::constant(mesh.clone(), 0.0),
        };
        let rep = check_uniqueness(&state, 1.0);
        assert!((rep.bound - 2.0).abs() < 1e-12, "K = 0.5 on the unit square");
        assert!(rep.satisfied);

        let mesh5 = Arc::new(build_rectangle_mesh(Rect::new(0.0, 0.0, 1.0, 5.0), 0.1).unwrap());
        let state5 = FlowState {
            u: VectorFieldP2::zero(mesh5.clone()),
            p: ScalarFieldP1::constant(mesh5, 0.0),
        };
        let rep5 = check_uniqueness(&state5, 1.0);
        assert!((rep5.bound - 1.0 / (0.5 * 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn adjoint_zero_for_zero_state() {
        let mesh = unit_mesh(0.05);
        let phi = ScalarFieldP1::constant(mesh.clone(), 1.0);
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let state = FlowState {
            u: VectorFieldP2::zero(mesh.clone()),
            p: ScalarFieldP1::constant(mesh.clone(), 0.0),
        };
        let q_prev = VectorFieldP2::zero(mesh.clone());
        let adj =
            solve_adjoint(&phi, &state, &q_prev, 1.0, &alpha, &OseenOptions::default()).unwrap();
        assert!(adj.q.l2_norm() < 1e-12);
    }

    #[test]
    fn adjoint_rhs_two_routes_agree() {
        let mesh = unit_mesh(0.02);
        let phi = ScalarFieldP1::from_fn(mesh.clone(), |x, y| (x - y).tanh());
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let u = VectorFieldP2::from_fn(mesh.clone(), |x, y| [y * y + x, x * y]);
        let prob =
            SaddleProblem::new(&phi, &homogeneous_trace(&mesh), 0.7, &alpha).unwrap();
        let via_matrix = adjoint_rhs(&prob, &u);
        let direct = assembly::adjoint_source(
            &mesh,
            &u,
            |t, qp| {
                let v = mesh.simplex(t);
                let s = p1_q(qp);
                alpha.eval(
                    s[0] * phi.values[v[0]] + s[1] * phi.values[v[1]] + s[2] * phi.values[v[2]],
                )
            },
            0.7,
        );
        let scale = la::norm2(&direct);
        for (a, b) in via_matrix.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn adjoint_is_linear_in_rhs() {
        let mesh = unit_mesh(0.05);
        let phi = ScalarFieldP1::from_fn(mesh.clone(), |x, _| x - 0.4);
        let alpha = AlphaFunction::new(5.0, 10.0, 0.01);
        let u = VectorFieldP2::from_fn(mesh.clone(), |x, y| {
            [y * (1.0 - y) * 0.3, x * (1.0 - x) * 0.1]
        });
        let prob = SaddleProblem::new(&phi, &homogeneous_trace(&mesh), 1.0, &alpha).unwrap();
        let rhs_u = adjoint_rhs(&prob, &u);
        let mut neg_conv = assembly::convection(&mesh, &u);
        neg_conv.scale(-1.0);
        let (op, rhs1) = {
            let (op, rhs) = prob.assemble(&[neg_conv.clone()], &rhs_u).unwrap();
            (op, rhs)
        };
        let c = 3.7;
        let rhs_u_scaled: Vec<f64> = rhs_u.iter().map(|v| c * v).collect();
        let (_, rhs2) = prob.assemble(&[neg_conv], &rhs_u_scaled).unwrap();
        let lu = DirectLu::factor(&op).unwrap();
        let x1 = lu.solve(&rhs1);
        let x2 = lu.solve(&rhs2);
        for (a, b) in x1.iter().zip(&x2) {
            assert!((c * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gmres_matches_direct_path() {
        let mesh = unit_mesh(0.01);
        let phi = ScalarFieldP1::from_fn(mesh.clone(), |x, y| {
            ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() * 8.0 - 2.0
        });
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let g = crate::fem::interpolate_boundary(&poiseuille_data(), &mesh).unwrap();
        let direct = solve_state(&phi, &g, 0.5, &alpha, &OseenOptions::default()).unwrap();
        let gm = solve_state(
            &phi,
            &g,
            0.5,
            &alpha,
            &OseenOptions {
                solver: LinearSolverKind::Gmres,
                ..Default::default()
            },
        )
        .unwrap();
        let diff: f64 = direct
            .u
            .values
            .iter()
            .zip(&gm.u.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = direct.u.l2_norm().max(1e-30);
        assert!(diff / scale < 1e-8, "relative L2 gap {:.3e}", diff / scale);
    }

    #[test]
    fn lagged_adjoint_fixed_point_converges() {
        let mesh = unit_mesh(0.02);
        let phi = ScalarFieldP1::from_fn(mesh.clone(), |x, y| {
            (((x - 0.5).powi(2) + (y - 0.4).powi(2)).sqrt() - 0.25) * 10.0
        });
        let alpha = AlphaFunction::new(50.0, 10.0, 0.005);
        let g = crate::fem::interpolate_boundary(&poiseuille_data(), &mesh).unwrap();
        let state = solve_state(&phi, &g, 1.0, &alpha, &OseenOptions::default()).unwrap();
        let mut q_prev = VectorFieldP2::zero(mesh.clone());
        let mut gap = f64::INFINITY;
        for _ in 0..30 {
            let adj =
                solve_adjoint(&phi, &state, &q_prev, 1.0, &alpha, &OseenOptions::default())
                    .unwrap();
            gap = adj
                .q
                .values
                .iter()
                .zip(&q_prev.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            q_prev = adj.q;
            if gap <= 1e-10 {
                break;
            }
        }
        assert!(gap <= 1e-10, "fixed-point residual {gap:.3e}");
    }
}
