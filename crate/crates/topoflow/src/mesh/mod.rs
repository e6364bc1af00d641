//! Conforming triangular meshes of rectangular domains.
//!
//! A mesh stores its full bisection forest: the active simplices are the
//! leaves, interior nodes remember how they were split so that coarsening can
//! undo refinement exactly. Meshes are immutable; [`Mesh::refine`],
//! [`Mesh::coarsen`] and [`Mesh::adapt`] return new meshes.
//!
//! Simplices are addressed by their position in the active list (dense,
//! deterministic order). Vertices are addressed by index into the vertex
//! array; scalar P1 fields are one coefficient per vertex.

mod isoline;
mod refine;

pub use isoline::{Isoline, IsolineSegment};

use std::collections::HashMap;
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate level set")]
    DegenerateLevelSet,
    #[error("refinement closure did not terminate (incompatible initial labeling)")]
    ClosureDiverged,
}

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// One of the four sides of the rectangular holdall boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    XMin,
    XMax,
    YMin,
    YMax,
}

impl Side {
    /// Outward unit normal of this side.
    pub fn outward_normal(&self) -> [f64; 2] {
        match self {
            Side::XMin => [-1.0, 0.0],
            Side::XMax => [1.0, 0.0],
            Side::YMin => [0.0, -1.0],
            Side::YMax => [0.0, 1.0],
        }
    }

    /// Tangent direction such that (tangent, outward normal) is a right-handed
    /// pair, i.e. the tangent runs counterclockwise around the domain.
    pub fn ccw_tangent(&self) -> [f64; 2] {
        let n = self.outward_normal();
        [-n[1], n[0]]
    }

    /// Coordinate that parametrizes the side (arclength up to offset).
    pub fn along_coordinate(&self, p: Point) -> f64 {
        match self {
            Side::XMin | Side::XMax => p[1],
            Side::YMin | Side::YMax => p[0],
        }
    }
}

/// Node of the bisection forest.
#[derive(Debug, Clone)]
pub(crate) struct TriNode {
    /// Vertex indices, newest vertex first; the refinement edge is
    /// `(verts[1], verts[2])`.
    pub verts: [u32; 3],
    pub parent: Option<u32>,
    pub children: Option<[u32; 2]>,
    /// Vertex created when this node was bisected (valid iff `children`).
    pub midpoint: u32,
}

impl TriNode {
    fn leaf(verts: [u32; 3], parent: Option<u32>) -> Self {
        Self {
            verts,
            parent,
            children: None,
            midpoint: u32::MAX,
        }
    }

    #[inline]
    pub fn refinement_edge(&self) -> (u32, u32) {
        edge_key(self.verts[1], self.verts[2])
    }
}

#[inline]
pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Mesh face (edge between two vertices).
#[derive(Debug, Clone)]
pub struct Face {
    pub verts: [u32; 2],
    /// Adjacent active simplices, smaller index first; interior faces have
    /// two, boundary faces one.
    pub tris: [u32; 2],
    pub n_tris: u8,
    pub boundary: Option<Side>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.boundary.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    extent: Rect,
    verts: Vec<Point>,
    nodes: Vec<TriNode>,
    /// Node ids of the leaves, ascending; position = public simplex index.
    active: Vec<u32>,
    faces: Vec<Face>,
    /// Per active simplex, its three face ids; face k is opposite vertex k.
    tri_faces: Vec<[u32; 3]>,
    /// Per vertex, the active simplices that contain it.
    vertex_star: Vec<Vec<u32>>,
    areas: Vec<f64>,
    locator: Locator,
}

/// Uniform rectangular criss-cross triangulation: every grid cell is split
/// into four triangles around its center, each with the cell side as
/// refinement edge so the initial labeling is compatible for bisection.
pub fn build_rectangle_mesh(extent: Rect, target_area: f64) -> Result<Mesh, MeshError> {
    if !(extent.width() > 0.0 && extent.height() > 0.0) {
        return Err(MeshError::InvalidParameter(
            "rectangle must have positive width and height".into(),
        ));
    }
    if !(target_area > 0.0) {
        return Err(MeshError::InvalidParameter(
            "target simplex area must be positive".into(),
        ));
    }
    if target_area > extent.area() {
        return Err(MeshError::InvalidParameter(format!(
            "target simplex area {target_area} exceeds the domain area {}",
            extent.area()
        )));
    }
    let delta = (4.0 * target_area).sqrt();
    let mut nx = (extent.width() / delta).ceil().max(1.0) as usize;
    let mut ny = (extent.height() / delta).ceil().max(1.0) as usize;
    // Guard against rounding making a cell a hair too large.
    while (extent.width() / nx as f64) * (extent.height() / ny as f64) / 4.0
        > target_area * (1.0 + 1e-12)
    {
        if extent.width() / nx as f64 >= extent.height() / ny as f64 {
            nx += 1;
        } else {
            ny += 1;
        }
    }

    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for j in 0..=ny {
        for i in 0..=nx {
            let x = extent.x0 + extent.width() * i as f64 / nx as f64;
            let y = extent.y0 + extent.height() * j as f64 / ny as f64;
            verts.push([x, y]);
        }
    }
    let corner = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut nodes = Vec::with_capacity(4 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let c = verts.len() as u32;
            let x = extent.x0 + extent.width() * (i as f64 + 0.5) / nx as f64;
            let y = extent.y0 + extent.height() * (j as f64 + 0.5) / ny as f64;
            verts.push([x, y]);
            let (v00, v10, v11, v01) = (
                corner(i, j),
                corner(i + 1, j),
                corner(i + 1, j + 1),
                corner(i, j + 1),
            );
            nodes.push(TriNode::leaf([c, v00, v10], None));
            nodes.push(TriNode::leaf([c, v10, v11], None));
            nodes.push(TriNode::leaf([c, v11, v01], None));
            nodes.push(TriNode::leaf([c, v01, v00], None));
        }
    }
    Ok(Mesh::from_arena(extent, verts, nodes))
}

impl Mesh {
    pub(crate) fn from_arena(extent: Rect, verts: Vec<Point>, nodes: Vec<TriNode>) -> Self {
        let active: Vec<u32> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.children.is_none())
            .map(|(i, _)| i as u32)
            .collect();

        // Face table keyed by sorted vertex pair.
        let mut face_map: HashMap<(u32, u32), u32> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut tri_faces = vec![[u32::MAX; 3]; active.len()];
        for (pos, &nid) in active.iter().enumerate() {
            let v = nodes[nid as usize].verts;
            for k in 0..3 {
                let (a, b) = edge_key(v[(k + 1) % 3], v[(k + 2) % 3]);
                let fid = *face_map.entry((a, b)).or_insert_with(|| {
                    faces.push(Face {
                        verts: [a, b],
                        tris: [u32::MAX; 2],
                        n_tris: 0,
                        boundary: None,
                    });
                    (faces.len() - 1) as u32
                });
                let f = &mut faces[fid as usize];
                assert!(f.n_tris < 2, "nonconforming mesh: face with >2 simplices");
                f.tris[f.n_tris as usize] = pos as u32;
                f.n_tris += 1;
                tri_faces[pos][k] = fid;
            }
        }
        for f in &mut faces {
            if f.n_tris == 2 && f.tris[0] > f.tris[1] {
                f.tris.swap(0, 1);
            }
        }

        // Boundary tags from the rectangle sides.
        let tol = 1e-12 * extent.width().max(extent.height()).max(1.0);
        for f in &mut faces {
            if f.n_tris != 1 {
                continue;
            }
            let a = verts[f.verts[0] as usize];
            let b = verts[f.verts[1] as usize];
            f.boundary = if (a[0] - extent.x0).abs() <= tol && (b[0] - extent.x0).abs() <= tol {
                Some(Side::XMin)
            } else if (a[0] - extent.x1).abs() <= tol && (b[0] - extent.x1).abs() <= tol {
                Some(Side::XMax)
            } else if (a[1] - extent.y0).abs() <= tol && (b[1] - extent.y0).abs() <= tol {
                Some(Side::YMin)
            } else if (a[1] - extent.y1).abs() <= tol && (b[1] - extent.y1).abs() <= tol {
                Some(Side::YMax)
            } else {
                panic!("boundary face not on any rectangle side")
            };
        }

        let mut vertex_star = vec![Vec::new(); verts.len()];
        for (pos, &nid) in active.iter().enumerate() {
            for &v in &nodes[nid as usize].verts {
                vertex_star[v as usize].push(pos as u32);
            }
        }

        let areas: Vec<f64> = active
            .iter()
            .map(|&nid| {
                let v = nodes[nid as usize].verts;
                let a = verts[v[0] as usize];
                let b = verts[v[1] as usize];
                let c = verts[v[2] as usize];
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            })
            .collect();
        for (i, &a) in areas.iter().enumerate() {
            assert!(a > 0.0, "simplex {i} has nonpositive area {a}");
        }

        let locator = Locator::build(&verts, &nodes, &active, extent);

        Self {
            extent,
            verts,
            nodes,
            active,
            faces,
            tri_faces,
            vertex_star,
            areas,
            locator,
        }
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    pub fn n_simplices(&self) -> usize {
        self.active.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.verts.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.verts[v]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.verts
    }

    /// Vertex indices of active simplex `t`, positively oriented.
    pub fn simplex(&self, t: usize) -> [usize; 3] {
        let v = self.nodes[self.active[t] as usize].verts;
        [v[0] as usize, v[1] as usize, v[2] as usize]
    }

    pub fn simplex_coords(&self, t: usize) -> [Point; 3] {
        let v = self.simplex(t);
        [self.verts[v[0]], self.verts[v[1]], self.verts[v[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Diameter = longest edge of simplex `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.simplex_coords(t);
        let e = |p: Point, q: Point| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        e(a, b).max(e(b, c)).max(e(c, a))
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Face ids of simplex `t`; entry `k` is the face opposite local vertex `k`.
    pub fn simplex_faces(&self, t: usize) -> [usize; 3] {
        let f = self.tri_faces[t];
        [f[0] as usize, f[1] as usize, f[2] as usize]
    }

    pub fn face_length(&self, f: usize) -> f64 {
        let [a, b] = self.faces[f].verts;
        let pa = self.verts[a as usize];
        let pb = self.verts[b as usize];
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    }

    /// Active simplices sharing vertex `v`.
    pub fn vertex_star(&self, v: usize) -> &[u32] {
        &self.vertex_star[v]
    }

    /// Neighbor of `t` across its local face `k`, if interior.
    pub fn neighbor(&self, t: usize, k: usize) -> Option<usize> {
        let f = &self.faces[self.tri_faces[t][k] as usize];
        if f.n_tris == 2 {
            let other = if f.tris[0] as usize == t {
                f.tris[1]
            } else {
                f.tris[0]
            };
            Some(other as usize)
        } else {
            None
        }
    }

    /// True if vertex `v` lies on the domain boundary.
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let p = self.verts[v];
        let tol = 1e-12 * self.extent.width().max(self.extent.height()).max(1.0);
        (p[0] - self.extent.x0).abs() <= tol
            || (p[0] - self.extent.x1).abs() <= tol
            || (p[1] - self.extent.y0).abs() <= tol
            || (p[1] - self.extent.y1).abs() <= tol
    }

    /// Evaluate a P1 field (one value per vertex) at an arbitrary point.
    pub fn eval_p1(&self, values: &[f64], p: Point) -> f64 {
        assert_eq!(values.len(), self.n_verts_checked(values.len()));
        let (t, bary) = self.locate(p);
        let v = self.simplex(t);
        bary[0] * values[v[0]] + bary[1] * values[v[1]] + bary[2] * values[v[2]]
    }

    fn n_verts_checked(&self, n: usize) -> usize {
        debug_assert_eq!(n, self.verts.len());
        self.verts.len()
    }

    /// Find the active simplex containing `p` (clamped to the domain) and the
    /// barycentric coordinates of `p` within it.
    pub fn locate(&self, p: Point) -> (usize, [f64; 3]) {
        self.locator.locate(self, p)
    }

    /// Integral of a P1 field over the mesh.
    pub fn integrate_p1(&self, values: &[f64]) -> f64 {
        crate::exec::sum_indexed(self.n_simplices(), |t| {
            let v = self.simplex(t);
            self.areas[t] * (values[v[0]] + values[v[1]] + values[v[2]]) / 3.0
        })
    }

    /// Consistency check used by tests and the self-check battery.
    pub fn validate(&self) -> Result<(), String> {
        let total: f64 = self.total_area();
        let rel = (total - self.extent.area()).abs() / self.extent.area();
        if rel > 1e-12 {
            return Err(format!("area defect: sum |T| = {total}, rel err {rel:.3e}"));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.n_tris == 0 || f.n_tris > 2 {
                return Err(format!("face {i} adjacent to {} simplices", f.n_tris));
            }
            if f.n_tris == 1 && f.boundary.is_none() {
                return Err(format!("interior face {i} with a single simplex (hanging node)"));
            }
        }
        for t in 0..self.n_simplices() {
            if self.areas[t] <= 0.0 {
                return Err(format!("simplex {t} area {}", self.areas[t]));
            }
        }
        // Children of refined nodes tile their parent.
        for (id, n) in self.nodes.iter().enumerate() {
            if let Some([c1, c2]) = n.children {
                let area = |nid: u32| {
                    let v = self.nodes[nid as usize].verts;
                    let a = self.verts[v[0] as usize];
                    let b = self.verts[v[1] as usize];
                    let c = self.verts[v[2] as usize];
                    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                };
                let defect = (area(c1) + area(c2) - area(id as u32)).abs();
                if defect > 1e-12 * area(id as u32).abs().max(1e-300) {
                    return Err(format!("children of node {id} do not tile it"));
                }
            }
        }
        Ok(())
    }
}

/// Uniform-grid point locator.
#[derive(Debug, Clone)]
struct Locator {
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl Locator {
    fn build(verts: &[Point], nodes: &[TriNode], active: &[u32], extent: Rect) -> Self {
        let n = active.len().max(1);
        let aspect = extent.width() / extent.height();
        let ny = ((n as f64 / (4.0 * aspect)).sqrt().ceil() as usize).max(1);
        let nx = ((ny as f64 * aspect).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for (pos, &nid) in active.iter().enumerate() {
            let v = nodes[nid as usize].verts;
            let xs = [
                verts[v[0] as usize][0],
                verts[v[1] as usize][0],
                verts[v[2] as usize][0],
            ];
            let ys = [
                verts[v[0] as usize][1],
                verts[v[1] as usize][1],
                verts[v[2] as usize][1],
            ];
            let clampi = |f: f64, n: usize| (f.max(0.0) as usize).min(n - 1);
            let i0 = clampi(
                ((xs.iter().cloned().fold(f64::MAX, f64::min) - extent.x0) / extent.width())
                    * nx as f64
                    - 1e-9,
                nx,
            );
            let i1 = clampi(
                ((xs.iter().cloned().fold(f64::MIN, f64::max) - extent.x0) / extent.width())
                    * nx as f64
                    + 1e-9,
                nx,
            );
            let j0 = clampi(
                ((ys.iter().cloned().fold(f64::MAX, f64::min) - extent.y0) / extent.height())
                    * ny as f64
                    - 1e-9,
                ny,
            );
            let j1 = clampi(
                ((ys.iter().cloned().fold(f64::MIN, f64::max) - extent.y0) / extent.height())
                    * ny as f64
                    + 1e-9,
                ny,
            );
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(pos as u32);
                }
            }
        }
        Self { nx, ny, bins }
    }

    fn locate(&self, mesh: &Mesh, p: Point) -> (usize, [f64; 3]) {
        let ext = mesh.extent;
        let x = p[0].clamp(ext.x0, ext.x1);
        let y = p[1].clamp(ext.y0, ext.y1);
        let i = (((x - ext.x0) / ext.width() * self.nx as f64) as usize).min(self.nx - 1);
        let j = (((y - ext.y0) / ext.height() * self.ny as f64) as usize).min(self.ny - 1);

        let mut best = (0usize, [0.0; 3], f64::MIN);
        for &t in &self.bins[j * self.nx + i] {
            let bary = barycentric(mesh.simplex_coords(t as usize), [x, y]);
            let min_b = bary[0].min(bary[1]).min(bary[2]);
            if min_b >= -1e-12 {
                return (t as usize, bary);
            }
            if min_b > best.2 {
                best = (t as usize, bary, min_b);
            }
        }
        // Roundoff may push a point just outside every candidate; fall back to
        // the globally nearest simplex.
        let mut global = best;
        if global.2 < -1e-9 || self.bins[j * self.nx + i].is_empty() {
            for t in 0..mesh.n_simplices() {
                let bary = barycentric(mesh.simplex_coords(t), [x, y]);
                let min_b = bary[0].min(bary[1]).min(bary[2]);
                if min_b > global.2 {
                    global = (t, bary, min_b);
                }
                if min_b >= -1e-12 {
                    break;
                }
            }
        }
        (global.0, global.1)
    }
}

pub(crate) fn barycentric(tri: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (p[1] - a[1]) * (c[0] - a[0])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_criss_cross() {
        let m = build_rectangle_mesh(Rect::unit(), 0.5).unwrap();
        assert_eq!(m.n_simplices(), 4);
        for t in 0..4 {
            assert!((m.area(t) - 0.25).abs() < 1e-15);
        }
        m.validate().unwrap();
    }

    #[test]
    fn tiling_exact() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn elongated_domain_area() {
        let m = build_rectangle_mesh(Rect::new(0.0, 0.0, 1.0, 5.0), 0.01).unwrap();
        assert!((m.total_area() - 5.0).abs() < 5.0 * 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn oversized_target_rejected() {
        assert!(matches!(
            build_rectangle_mesh(Rect::unit(), 1.5),
            Err(MeshError::InvalidParameter(_))
        ));
        assert!(matches!(
            build_rectangle_mesh(Rect::new(0.0, 0.0, 0.0, 1.0), 0.1),
            Err(MeshError::InvalidParameter(_))
        ));
    }

    #[test]
    fn target_area_respected() {
        for ta in [0.5, 0.11, 0.03, 0.0009] {
            let m = build_rectangle_mesh(Rect::new(0.0, 0.0, 2.0, 3.0), ta).unwrap();
            for t in 0..m.n_simplices() {
                assert!(m.area(t) <= ta * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn locate_finds_containing_simplex() {
        let m = build_rectangle_mesh(Rect::unit(), 0.01).unwrap();
        for p in [[0.3, 0.7], [0.0, 0.0], [1.0, 1.0], [0.5, 0.123]] {
            let (t, bary) = m.locate(p);
            let [a, b, c] = m.simplex_coords(t);
            let x = bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0];
            let y = bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1];
            assert!((x - p[0]).abs() < 1e-12 && (y - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn p1_eval_is_nodal_at_vertices() {
        let m = build_rectangle_mesh(Rect::unit(), 0.05).unwrap();
        let vals: Vec<f64> = (0..m.n_vertices()).map(|i| (i as f64).sin()).collect();
        for v in (0..m.n_vertices()).step_by(7) {
            let got = m.eval_p1(&vals, m.vertex(v));
            assert!((got - vals[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_faces_tagged() {
        let m = build_rectangle_mesh(Rect::new(0.0, 0.0, 2.0, 1.0), 0.05).unwrap();
        let mut count = [0usize; 4];
        for f in m.faces() {
            if let Some(side) = f.boundary {
                count[match side {
                    Side::XMin => 0,
                    Side::XMax => 1,
                    Side::YMin => 2,
                    Side::YMax => 3,
                }] += 1;
            }
        }
        assert!(count.iter().all(|&c| c > 0));
        // total boundary length = perimeter
        let blen: f64 = (0..m.n_faces())
            .filter(|&f| m.face(f).is_boundary())
            .map(|f| m.face_length(f))
            .sum();
        assert!((blen - 6.0).abs() < 1e-12);
    }
}
