//! Element assembly of all bilinear forms used by the flow, adjoint and
//! Cahn-Hilliard systems.
//!
//! Every kernel integrates with the degree-4 triangle rule. Element loops are
//! data-parallel maps; the scatter into triplets runs in element order so the
//! assembled operator does not depend on the thread count.
//!
//! Vector P2 degrees of freedom are interleaved: dof(node, comp) = 2 node + comp.

use super::basis::{p1_shape, p2_grad_at_q, p2_at_q, ElemGeom, P1_GRAD_REF};
use super::field::{p2_elem_nodes, VectorFieldP2};
use super::quadrature::{N_Q, TRI_Q};
use crate::exec;
use crate::la::Triplets;
use crate::mesh::Mesh;

/// P1 shape values at quadrature point `q`.
#[inline]
pub fn p1_q(q: usize) -> [f64; 3] {
    let ([xi, eta], _) = TRI_Q[q];
    p1_shape(xi, eta)
}

/// Physical coordinates of quadrature point `q` in simplex `t`.
#[inline]
pub fn quad_point(mesh: &Mesh, t: usize, q: usize) -> [f64; 2] {
    let ([xi, eta], _) = TRI_Q[q];
    ElemGeom::of(mesh, t).map(xi, eta)
}

/// Mass matrix ∫ N_j N_i on the P1 space.
pub fn p1_mass(mesh: &Mesh) -> Triplets {
    p1_weighted_mass(mesh, |_, _| 1.0)
}

/// Weighted mass matrix ∫ w N_j N_i on the P1 space, with the weight given
/// per (element, quadrature point).
pub fn p1_weighted_mass(mesh: &Mesh, w: impl Fn(usize, usize) -> f64 + Sync + Send) -> Triplets {
    let n = mesh.n_vertices();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let det = ElemGeom::of(mesh, t).det;
        let verts = mesh.simplex(t);
        let mut m = [[0.0f64; 3]; 3];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let s = p1_q(q);
            let c = wq * det * w(t, q);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += c * s[i] * s[j];
                }
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

/// Stiffness matrix ∫ ∇N_j · ∇N_i on the P1 space.
pub fn p1_stiffness(mesh: &Mesh) -> Triplets {
    let n = mesh.n_vertices();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let verts = mesh.simplex(t);
        let g: Vec<[f64; 2]> = P1_GRAD_REF.iter().map(|&gr| geom.phys_grad(gr)).collect();
        let area = 0.5 * geom.det;
        let mut m = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
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

/// Load vector ∫ f N_i on the P1 space, `f` per (element, quadrature point).
pub fn p1_load(mesh: &Mesh, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Vec<f64> {
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let det = ElemGeom::of(mesh, t).det;
        let verts = mesh.simplex(t);
        let mut b = [0.0f64; 3];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let s = p1_q(q);
            let c = wq * det * f(t, q);
            for i in 0..3 {
                b[i] += c * s[i];
            }
        }
        (verts, b)
    });
    let mut out = vec![0.0; mesh.n_vertices()];
    for (verts, b) in locals {
        for i in 0..3 {
            out[verts[i]] += b[i];
        }
    }
    out
}

/// ∫ N_i over the mesh for every P1 basis function (row of weights enforcing
/// the zero-mean pressure constraint).
pub fn p1_integral_weights(mesh: &Mesh) -> Vec<f64> {
    p1_load(mesh, |_, _| 1.0)
}

/// Vector P2 stiffness ∫ ∇ψ_j : ∇ψ_i (component diagonal).
pub fn vector_stiffness(mesh: &Mesh) -> Triplets {
    let ndof = 2 * super::field::n_p2_nodes(mesh);
    let g_ref = p2_grad_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let nodes = p2_elem_nodes(mesh, t);
        let mut m = [[0.0f64; 6]; 6];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let c = wq * geom.det;
            let g: Vec<[f64; 2]> = g_ref[q].iter().map(|&gr| geom.phys_grad(gr)).collect();
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += c * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        (nodes, m)
    });
    let mut trips = Triplets::with_capacity(ndof, ndof, 72 * locals.len());
    for (nodes, m) in locals {
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    trips.push(2 * nodes[i] + c, 2 * nodes[j] + c, m[i][j]);
                }
            }
        }
    }
    trips
}

/// Weighted vector P2 mass ∫ w ψ_j · ψ_i (component diagonal), weight per
/// (element, quadrature point).
pub fn vector_mass_weighted(
    mesh: &Mesh,
    w: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> Triplets {
    let ndof = 2 * super::field::n_p2_nodes(mesh);
    let shapes = p2_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let det = ElemGeom::of(mesh, t).det;
        let nodes = p2_elem_nodes(mesh, t);
        let mut m = [[0.0f64; 6]; 6];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let s = shapes[q];
            let c = wq * det * w(t, q);
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += c * s[i] * s[j];
                }
            }
        }
        (nodes, m)
    });
    let mut trips = Triplets::with_capacity(ndof, ndof, 72 * locals.len());
    for (nodes, m) in locals {
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    trips.push(2 * nodes[i] + c, 2 * nodes[j] + c, m[i][j]);
                }
            }
        }
    }
    trips
}

/// Convection matrix ∫ ((b·∇)ψ_j) · ψ_i with frozen transport `b`
/// (component diagonal).
pub fn convection(mesh: &Mesh, b: &VectorFieldP2) -> Triplets {
    let ndof = 2 * super::field::n_p2_nodes(mesh);
    let shapes = p2_at_q();
    let g_ref = p2_grad_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let nodes = p2_elem_nodes(mesh, t);
        let mut m = [[0.0f64; 6]; 6];
        for q in 0..N_Q {
            let ([xi, eta], wq) = TRI_Q[q];
            let bv = b.eval_ref(t, xi, eta);
            let s = shapes[q];
            let c = wq * geom.det;
            for j in 0..6 {
                let g = geom.phys_grad(g_ref[q][j]);
                let adv = bv[0] * g[0] + bv[1] * g[1];
                for i in 0..6 {
                    m[i][j] += c * s[i] * adv;
                }
            }
        }
        (nodes, m)
    });
    let mut trips = Triplets::with_capacity(ndof, ndof, 72 * locals.len());
    for (nodes, m) in locals {
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    trips.push(2 * nodes[i] + c, 2 * nodes[j] + c, m[i][j]);
                }
            }
        }
    }
    trips
}

/// Linearization reaction ∫ ((ψ_j·∇)u) · ψ_i around the state `u`
/// (couples components: entry (2i+c, 2j+d) = ∫ N_i N_j ∂_d u_c).
pub fn convection_reaction(mesh: &Mesh, u: &VectorFieldP2) -> Triplets {
    let ndof = 2 * super::field::n_p2_nodes(mesh);
    let shapes = p2_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let det = ElemGeom::of(mesh, t).det;
        let nodes = p2_elem_nodes(mesh, t);
        // m[c][d][i][j]
        let mut m = [[[[0.0f64; 6]; 6]; 2]; 2];
        for q in 0..N_Q {
            let ([xi, eta], wq) = TRI_Q[q];
            let grad_u = u.grad_ref(t, xi, eta);
            let s = shapes[q];
            let c0 = wq * det;
            for comp in 0..2 {
                for d in 0..2 {
                    let gu = grad_u[comp][d];
                    if gu == 0.0 {
                        continue;
                    }
                    for i in 0..6 {
                        for j in 0..6 {
                            m[comp][d][i][j] += c0 * s[i] * s[j] * gu;
                        }
                    }
                }
            }
        }
        (nodes, m)
    });
    let mut trips = Triplets::with_capacity(ndof, ndof, 144 * locals.len());
    for (nodes, m) in locals {
        for c in 0..2 {
            for d in 0..2 {
                for i in 0..6 {
                    for j in 0..6 {
                        trips.push(2 * nodes[i] + c, 2 * nodes[j] + d, m[c][d][i][j]);
                    }
                }
            }
        }
    }
    trips
}

/// Discrete divergence coupling B with B[i, 2j+c] = -∫ N_i ∂_c ψ_j
/// (P1 pressure test functions against the vector P2 space).
pub fn divergence(mesh: &Mesh) -> Triplets {
    let nu = 2 * super::field::n_p2_nodes(mesh);
    let np = mesh.n_vertices();
    let g_ref = p2_grad_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let verts = mesh.simplex(t);
        let nodes = p2_elem_nodes(mesh, t);
        let mut m = [[[0.0f64; 2]; 6]; 3];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let s = p1_q(q);
            let c0 = wq * geom.det;
            for j in 0..6 {
                let g = geom.phys_grad(g_ref[q][j]);
                for i in 0..3 {
                    m[i][j][0] -= c0 * s[i] * g[0];
                    m[i][j][1] -= c0 * s[i] * g[1];
                }
            }
        }
        (verts, nodes, m)
    });
    let mut trips = Triplets::with_capacity(np, nu, 36 * locals.len());
    for (verts, nodes, m) in locals {
        for i in 0..3 {
            for j in 0..6 {
                for c in 0..2 {
                    trips.push(verts[i], 2 * nodes[j] + c, m[i][j][c]);
                }
            }
        }
    }
    trips
}

/// Load vector ∫ f · ψ_i on the vector P2 space, `f` per (element,
/// quadrature point).
pub fn vector_load(mesh: &Mesh, f: impl Fn(usize, usize) -> [f64; 2] + Sync + Send) -> Vec<f64> {
    let shapes = p2_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let det = ElemGeom::of(mesh, t).det;
        let nodes = p2_elem_nodes(mesh, t);
        let mut b = [[0.0f64; 2]; 6];
        for q in 0..N_Q {
            let (_, wq) = TRI_Q[q];
            let fv = f(t, q);
            let s = shapes[q];
            let c = wq * det;
            for i in 0..6 {
                b[i][0] += c * s[i] * fv[0];
                b[i][1] += c * s[i] * fv[1];
            }
        }
        (nodes, b)
    });
    let mut out = vec![0.0; 2 * super::field::n_p2_nodes(mesh)];
    for (nodes, b) in locals {
        for i in 0..6 {
            out[2 * nodes[i]] += b[i][0];
            out[2 * nodes[i] + 1] += b[i][1];
        }
    }
    out
}

/// Directly assembled right-hand side ∫ w u·ψ_i + μ ∇u : ∇ψ_i; the weight is
/// per (element, quadrature point). Used for the adjoint source and as the
/// independent cross-check of the matrix route.
pub fn adjoint_source(
    mesh: &Mesh,
    u: &VectorFieldP2,
    w: impl Fn(usize, usize) -> f64 + Sync + Send,
    mu: f64,
) -> Vec<f64> {
    let shapes = p2_at_q();
    let g_ref = p2_grad_at_q();
    let locals = exec::map_indexed(mesh.n_simplices(), |t| {
        let geom = ElemGeom::of(mesh, t);
        let nodes = p2_elem_nodes(mesh, t);
        let mut b = [[0.0f64; 2]; 6];
        for q in 0..N_Q {
            let ([xi, eta], wq) = TRI_Q[q];
            let uv = u.eval_ref(t, xi, eta);
            let gu = u.grad_ref(t, xi, eta);
            let s = shapes[q];
            let c0 = wq * geom.det;
            let aw = w(t, q);
            for i in 0..6 {
                let g = geom.phys_grad(g_ref[q][i]);
                for comp in 0..2 {
                    b[i][comp] += c0
                        * (aw * uv[comp] * s[i]
                            + mu * (gu[comp][0] * g[0] + gu[comp][1] * g[1]));
                }
            }
        }
        (nodes, b)
    });
    let mut out = vec![0.0; 2 * super::field::n_p2_nodes(mesh)];
    for (nodes, b) in locals {
        for i in 0..6 {
            out[2 * nodes[i]] += b[i][0];
            out[2 * nodes[i] + 1] += b[i][1];
        }
    }
    out
}
