//! P1 and P2 shape functions on the reference triangle, and the affine
//! element geometry needed to push gradients to physical space.

use super::quadrature::{N_Q, TRI_Q};
use crate::mesh::{Mesh, Point};

/// P1 shape values at a reference point.
#[inline]
pub fn p1_shape(xi: f64, eta: f64) -> [f64; 3] {
    [1.0 - xi - eta, xi, eta]
}

/// Reference gradients of the P1 shapes (constant).
pub const P1_GRAD_REF: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// P2 shape values at a reference point. Local nodes: 0..3 vertices,
/// 3 + k = midpoint of the edge opposite vertex k.
#[inline]
pub fn p2_shape(xi: f64, eta: f64) -> [f64; 6] {
    let l = [1.0 - xi - eta, xi, eta];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

/// Reference gradients of the P2 shapes at a reference point.
#[inline]
pub fn p2_grad_ref(xi: f64, eta: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - xi - eta;
    [
        [1.0 - 4.0 * l0, 1.0 - 4.0 * l0],
        [4.0 * xi - 1.0, 0.0],
        [0.0, 4.0 * eta - 1.0],
        [4.0 * eta, 4.0 * xi],
        [-4.0 * eta, 4.0 * (l0 - eta)],
        [4.0 * (l0 - xi), -4.0 * xi],
    ]
}

/// Values of the P1 shapes at the triangle quadrature points.
pub fn p1_at_q() -> [[f64; 3]; N_Q] {
    let mut out = [[0.0; 3]; N_Q];
    for (q, &([xi, eta], _)) in TRI_Q.iter().enumerate() {
        out[q] = p1_shape(xi, eta);
    }
    out
}

/// Values of the P2 shapes at the triangle quadrature points.
pub fn p2_at_q() -> [[f64; 6]; N_Q] {
    let mut out = [[0.0; 6]; N_Q];
    for (q, &([xi, eta], _)) in TRI_Q.iter().enumerate() {
        out[q] = p2_shape(xi, eta);
    }
    out
}

/// Reference gradients of the P2 shapes at the quadrature points.
pub fn p2_grad_at_q() -> [[[f64; 2]; 6]; N_Q] {
    let mut out = [[[0.0; 2]; 6]; N_Q];
    for (q, &([xi, eta], _)) in TRI_Q.iter().enumerate() {
        out[q] = p2_grad_ref(xi, eta);
    }
    out
}

/// Affine geometry of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElemGeom {
    /// Inverse transpose of the Jacobian [b-a | c-a].
    pub inv_jt: [[f64; 2]; 2],
    /// det J = 2 |T| (positive, mesh is positively oriented).
    pub det: f64,
    pub coords: [Point; 3],
}

impl ElemGeom {
    pub fn new(coords: [Point; 3]) -> Self {
        let [a, b, c] = coords;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_jt = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        Self {
            inv_jt,
            det,
            coords,
        }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.simplex_coords(t))
    }

    /// Push a reference gradient to physical space.
    #[inline]
    pub fn phys_grad(&self, g_ref: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jt[0][0] * g_ref[0] + self.inv_jt[0][1] * g_ref[1],
            self.inv_jt[1][0] * g_ref[0] + self.inv_jt[1][1] * g_ref[1],
        ]
    }

    /// Physical coordinates of a reference point.
    #[inline]
    pub fn map(&self, xi: f64, eta: f64) -> Point {
        let [a, b, c] = self.coords;
        [
            a[0] + xi * (b[0] - a[0]) + eta * (c[0] - a[0]),
            a[1] + xi * (b[1] - a[1]) + eta * (c[1] - a[1]),
        ]
    }
}
