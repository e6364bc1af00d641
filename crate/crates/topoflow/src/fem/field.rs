//! Finite element fields: P1 scalars (one value per vertex) and P2 vectors
//! (two values per P2 node = vertices plus face midpoints).

use super::basis::{p2_grad_ref, p2_shape, ElemGeom};
use crate::mesh::{Mesh, Point};
use std::sync::Arc;

/// Continuous piecewise linear scalar field.
#[derive(Debug, Clone)]
pub struct ScalarFieldP1 {
    mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl ScalarFieldP1 {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.n_vertices());
        Self { mesh, values }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.n_vertices();
        Self {
            mesh,
            values: vec![c; n],
        }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..mesh.n_vertices())
            .map(|v| {
                let p = mesh.vertex(v);
                f(p[0], p[1])
            })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Value at barycentric coordinates inside simplex `t`.
    #[inline]
    pub fn eval_bary(&self, t: usize, bary: [f64; 3]) -> f64 {
        let v = self.mesh.simplex(t);
        bary[0] * self.values[v[0]] + bary[1] * self.values[v[1]] + bary[2] * self.values[v[2]]
    }

    /// Constant gradient on simplex `t`.
    pub fn grad(&self, t: usize) -> [f64; 2] {
        let geom = ElemGeom::of(&self.mesh, t);
        let v = self.mesh.simplex(t);
        let mut g = [0.0; 2];
        for (k, grad_ref) in super::basis::P1_GRAD_REF.iter().enumerate() {
            let gp = geom.phys_grad(*grad_ref);
            g[0] += self.values[v[k]] * gp[0];
            g[1] += self.values[v[k]] * gp[1];
        }
        g
    }

    /// Evaluate at an arbitrary point (point location on the owning mesh).
    pub fn eval_point(&self, p: Point) -> f64 {
        self.mesh.eval_p1(&self.values, p)
    }

    pub fn integral(&self) -> f64 {
        self.mesh.integrate_p1(&self.values)
    }

    /// ∫ |∇f|² over the mesh (exact for P1).
    pub fn h1_seminorm_sq(&self) -> f64 {
        crate::exec::sum_indexed(self.mesh.n_simplices(), |t| {
            let g = self.grad(t);
            self.mesh.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
    }

    /// Transfer onto another mesh by nodal evaluation: exact prolongation on
    /// refinement, injection at surviving vertices on coarsening.
    pub fn transfer_to(&self, target: &Arc<Mesh>) -> ScalarFieldP1 {
        let values = crate::exec::map_indexed(target.n_vertices(), |v| {
            self.eval_point(target.vertex(v))
        });
        ScalarFieldP1::new(target.clone(), values)
    }
}

/// Number of P2 scalar nodes of a mesh (vertices + face midpoints).
pub fn n_p2_nodes(mesh: &Mesh) -> usize {
    mesh.n_vertices() + mesh.n_faces()
}

/// Physical coordinate of P2 node `n`.
pub fn p2_node_coord(mesh: &Mesh, n: usize) -> Point {
    if n < mesh.n_vertices() {
        mesh.vertex(n)
    } else {
        let f = mesh.face(n - mesh.n_vertices());
        let a = mesh.vertex(f.verts[0] as usize);
        let b = mesh.vertex(f.verts[1] as usize);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }
}

/// Global P2 node ids of the six local nodes of simplex `t`.
#[inline]
pub fn p2_elem_nodes(mesh: &Mesh, t: usize) -> [usize; 6] {
    let v = mesh.simplex(t);
    let f = mesh.simplex_faces(t);
    let nv = mesh.n_vertices();
    [v[0], v[1], v[2], nv + f[0], nv + f[1], nv + f[2]]
}

/// Continuous piecewise quadratic vector field, components interleaved:
/// dof(node, comp) = 2 * node + comp.
#[derive(Debug, Clone)]
pub struct VectorFieldP2 {
    mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl VectorFieldP2 {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 2 * n_p2_nodes(&mesh));
        Self { mesh, values }
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let n = 2 * n_p2_nodes(&mesh);
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let n = n_p2_nodes(&mesh);
        let mut values = vec![0.0; 2 * n];
        for node in 0..n {
            let p = p2_node_coord(&mesh, node);
            let v = f(p[0], p[1]);
            values[2 * node] = v[0];
            values[2 * node + 1] = v[1];
        }
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / 2
    }

    #[inline]
    pub fn node_value(&self, node: usize) -> [f64; 2] {
        [self.values[2 * node], self.values[2 * node + 1]]
    }

    /// Value at a reference point of simplex `t`.
    pub fn eval_ref(&self, t: usize, xi: f64, eta: f64) -> [f64; 2] {
        let nodes = p2_elem_nodes(&self.mesh, t);
        let s = p2_shape(xi, eta);
        let mut out = [0.0; 2];
        for k in 0..6 {
            out[0] += s[k] * self.values[2 * nodes[k]];
            out[1] += s[k] * self.values[2 * nodes[k] + 1];
        }
        out
    }

    /// Gradient (∂u_i/∂x_j as `grad[i][j]`) at a reference point of `t`.
    pub fn grad_ref(&self, t: usize, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        let geom = ElemGeom::of(&self.mesh, t);
        let nodes = p2_elem_nodes(&self.mesh, t);
        let gr = p2_grad_ref(xi, eta);
        let mut out = [[0.0; 2]; 2];
        for k in 0..6 {
            let g = geom.phys_grad(gr[k]);
            for i in 0..2 {
                let c = self.values[2 * nodes[k] + i];
                out[i][0] += c * g[0];
                out[i][1] += c * g[1];
            }
        }
        out
    }

    /// Evaluate at an arbitrary point (used to carry lagged data to a new mesh).
    pub fn eval_point(&self, p: Point) -> [f64; 2] {
        let (t, bary) = self.mesh.locate(p);
        self.eval_ref(t, bary[1], bary[2])
    }

    /// Nodal transfer onto another mesh.
    pub fn transfer_to(&self, target: &Arc<Mesh>) -> VectorFieldP2 {
        let n = n_p2_nodes(target);
        let vals = crate::exec::map_indexed(n, |node| {
            self.eval_point(p2_node_coord(target, node))
        });
        let mut values = vec![0.0; 2 * n];
        for (node, v) in vals.into_iter().enumerate() {
            values[2 * node] = v[0];
            values[2 * node + 1] = v[1];
        }
        VectorFieldP2::new(target.clone(), values)
    }

    /// Discrete L² norm: sqrt(∫ |u|²) by quadrature.
    pub fn l2_norm(&self) -> f64 {
        use super::quadrature::TRI_Q;
        crate::exec::sum_indexed(self.mesh.n_simplices(), |t| {
            let det = ElemGeom::of(&self.mesh, t).det;
            TRI_Q
                .iter()
                .map(|&([xi, eta], w)| {
                    let u = self.eval_ref(t, xi, eta);
                    w * det * (u[0] * u[0] + u[1] * u[1])
                })
                .sum::<f64>()
        })
        .sqrt()
    }

    /// ∫ |∇u|² by quadrature (exact: the integrand is quadratic).
    pub fn h1_seminorm_sq(&self) -> f64 {
        use super::quadrature::TRI_Q;
        crate::exec::sum_indexed(self.mesh.n_simplices(), |t| {
            let det = ElemGeom::of(&self.mesh, t).det;
            TRI_Q
                .iter()
                .map(|&([xi, eta], w)| {
                    let g = self.grad_ref(t, xi, eta);
                    w * det
                        * (g[0][0] * g[0][0]
                            + g[0][1] * g[0][1]
                            + g[1][0] * g[1][0]
                            + g[1][1] * g[1][1])
                })
                .sum::<f64>()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, Rect};

    #[test]
    fn p1_gradient_and_integral() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.05).unwrap());
        let f = ScalarFieldP1::from_fn(mesh.clone(), |x, y| 2.0 * x - 3.0 * y + 1.0);
        for t in (0..mesh.n_simplices()).step_by(5) {
            let g = f.grad(t);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
        // ∫ (2x - 3y + 1) over unit square = 1 - 1.5 + 1 = 0.5
        assert!((f.integral() - 0.5).abs() < 1e-12);
        assert!((f.h1_seminorm_sq() - 13.0).abs() < 1e-10);
    }

    #[test]
    fn p2_reproduces_quadratics() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.125).unwrap());
        let u = VectorFieldP2::from_fn(mesh.clone(), |x, y| [x * x + y, x * y]);
        for &(px, py) in [(0.3, 0.4), (0.77, 0.12), (0.5, 0.5)].iter() {
            let v = u.eval_point([px, py]);
            assert!((v[0] - (px * px + py)).abs() < 1e-12);
            assert!((v[1] - px * py).abs() < 1e-12);
        }
        let (t, bary) = mesh.locate([0.3, 0.4]);
        let g = u.grad_ref(t, bary[1], bary[2]);
        assert!((g[0][0] - 0.6).abs() < 1e-12); // d(x^2+y)/dx = 2x
        assert!((g[0][1] - 1.0).abs() < 1e-12);
        assert!((g[1][0] - 0.4).abs() < 1e-12); // d(xy)/dx = y
        assert!((g[1][1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn transfer_exact_on_refinement() {
        let mesh = Arc::new(build_rectangle_mesh(Rect::unit(), 0.125).unwrap());
        let f = ScalarFieldP1::from_fn(mesh.clone(), |x, y| (3.0 * x).sin() + y);
        let fine = Arc::new(mesh.refine(&(0..mesh.n_simplices()).collect::<Vec<_>>()).unwrap());
        let g = f.transfer_to(&fine);
        assert!((f.integral() - g.integral()).abs() < 1e-13);
    }
}
