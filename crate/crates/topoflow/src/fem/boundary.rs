//! Dirichlet boundary data: parabolic in/outlet profiles on the rectangle
//! sides and their nodal interpolation onto the P2 trace space.

use super::field::{n_p2_nodes, p2_node_coord};
use crate::mesh::{Mesh, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Parabolic velocity profile on one side of the rectangle.
///
/// The scalar profile is `h (1 - ((x - m)/(l/2))²)` inside `|x - m| < l/2`
/// and zero outside, where `x` is the coordinate along the side. The profile
/// scales a direction given in the local (outward normal, ccw tangent) frame,
/// so `normal = -1` is an inflow, `normal = +1` an outflow.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BoundaryProfile {
    pub side: Side,
    /// Center m of the profile along the side (length units).
    pub center: f64,
    /// Support width l > 0.
    pub width: f64,
    /// Peak speed h.
    pub height: f64,
    /// Outward-normal component of the direction (-1 = into the domain).
    pub normal: f64,
    /// Tangential component of the direction (counterclockwise tangent).
    #[serde(default)]
    pub tangential: f64,
}

/// Parabola factor of the profile at arclength coordinate `x`.
pub fn profile_eval(p: &BoundaryProfile, x: f64) -> f64 {
    let half = 0.5 * p.width;
    if (x - p.center).abs() < half {
        let r = (x - p.center) / half;
        p.height * (1.0 - r * r)
    } else {
        0.0
    }
}

impl BoundaryProfile {
    /// Velocity vector contributed at a point of the profile's side.
    pub fn velocity_at(&self, point: [f64; 2]) -> [f64; 2] {
        let v = profile_eval(self, self.side.along_coordinate(point));
        let n = self.side.outward_normal();
        let t = self.side.ccw_tangent();
        [
            v * (self.normal * n[0] + self.tangential * t[0]),
            v * (self.normal * n[1] + self.tangential * t[1]),
        ]
    }
}

/// Complete Dirichlet datum for the velocity on the holdall boundary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum DirichletData {
    /// No-slip everywhere.
    NoSlip,
    /// The same constant vector on all of the boundary.
    Uniform([f64; 2]),
    /// Superposition of profiles; untouched boundary is no-slip.
    Profiles(Vec<BoundaryProfile>),
}

impl DirichletData {
    pub fn validate(&self) -> Result<(), FemError> {
        if let DirichletData::Profiles(profiles) = self {
            for p in profiles {
                if !(p.width > 0.0) {
                    return Err(FemError::InvalidConfig(format!(
                        "profile on {:?} has nonpositive width {}",
                        p.side, p.width
                    )));
                }
            }
            for (i, a) in profiles.iter().enumerate() {
                for b in profiles.iter().skip(i + 1) {
                    if a.side == b.side {
                        let (a0, a1) = (a.center - 0.5 * a.width, a.center + 0.5 * a.width);
                        let (b0, b1) = (b.center - 0.5 * b.width, b.center + 0.5 * b.width);
                        if a0 < b1 && b0 < a1 {
                            return Err(FemError::InvalidConfig(format!(
                                "overlapping profiles on side {:?}: [{a0}, {a1}] and [{b0}, {b1}]",
                                a.side
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn velocity_at(&self, side: Side, point: [f64; 2]) -> [f64; 2] {
        match self {
            DirichletData::NoSlip => [0.0, 0.0],
            DirichletData::Uniform(g) => *g,
            DirichletData::Profiles(profiles) => {
                let mut v = [0.0, 0.0];
                for p in profiles.iter().filter(|p| p.side == side) {
                    let pv = p.velocity_at(point);
                    v[0] += pv[0];
                    v[1] += pv[1];
                }
                v
            }
        }
    }
}

/// Velocity trace at the boundary P2 nodes; interior nodes are absent.
#[derive(Debug, Clone)]
pub struct DirichletTrace {
    /// (P2 node, prescribed velocity), ascending by node.
    pub nodes: Vec<(usize, [f64; 2])>,
}

impl DirichletTrace {
    /// Net outward flux ∫ g·n ds, by Simpson's rule per boundary face
    /// (exact for the P2 trace).
    pub fn net_flux(&self, mesh: &Mesh) -> f64 {
        let nv = mesh.n_vertices();
        let mut value = vec![[0.0; 2]; n_p2_nodes(mesh)];
        let mut have = vec![false; n_p2_nodes(mesh)];
        for &(n, v) in &self.nodes {
            value[n] = v;
            have[n] = true;
        }
        let mut flux = 0.0;
        for (fid, face) in mesh.faces().iter().enumerate() {
            let Some(side) = face.boundary else { continue };
            let n = side.outward_normal();
            let (a, b, m) = (face.verts[0] as usize, face.verts[1] as usize, nv + fid);
            debug_assert!(have[a] && have[b] && have[m]);
            let len = mesh.face_length(fid);
            let dot = |v: [f64; 2]| v[0] * n[0] + v[1] * n[1];
            flux += len / 6.0 * (dot(value[a]) + 4.0 * dot(value[m]) + dot(value[b]));
        }
        flux
    }

    /// Max nodal speed, used to scale the compatibility tolerance.
    pub fn max_speed(&self) -> f64 {
        self.nodes
            .iter()
            .map(|(_, v)| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Nodal interpolation of the boundary datum at all boundary P2 nodes.
///
/// Corner vertices belong to two sides; the datum must agree there (profiles
/// vanish at corners, uniform data is side-independent), otherwise the
/// configuration is rejected.
pub fn interpolate_boundary(data: &DirichletData, mesh: &Mesh) -> Result<DirichletTrace, FemError> {
    data.validate()?;
    let nv = mesh.n_vertices();
    let mut value = vec![[0.0; 2]; n_p2_nodes(mesh)];
    let mut have = vec![false; n_p2_nodes(mesh)];
    for (fid, face) in mesh.faces().iter().enumerate() {
        let Some(side) = face.boundary else { continue };
        for node in [face.verts[0] as usize, face.verts[1] as usize, nv + fid] {
            let v = data.velocity_at(side, p2_node_coord(mesh, node));
            if have[node] {
                let d = ((v[0] - value[node][0]).powi(2) + (v[1] - value[node][1]).powi(2)).sqrt();
                let scale = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1.0);
                if d > 1e-10 * scale {
                    return Err(FemError::InvalidConfig(format!(
                        "conflicting boundary values at corner node {node}"
                    )));
                }
            } else {
                value[node] = v;
                have[node] = true;
            }
        }
    }
    let nodes = have
        .iter()
        .enumerate()
        .filter(|&(_, &h)| h)
        .map(|(n, _)| (n, value[n]))
        .collect();
    Ok(DirichletTrace { nodes })
}
