//! Level-set extraction and sublevel-area computation for P1 fields.

use super::{Mesh, MeshError, Point};

/// One straight segment of a level set, with the simplex it came from.
#[derive(Debug, Clone, Copy)]
pub struct IsolineSegment {
    pub a: Point,
    pub b: Point,
    pub simplex: usize,
}

impl IsolineSegment {
    pub fn length(&self) -> f64 {
        ((self.a[0] - self.b[0]).powi(2) + (self.a[1] - self.b[1]).powi(2)).sqrt()
    }
}

/// Discrete level set `{field = level}` of a P1 field.
#[derive(Debug, Clone)]
pub struct Isoline {
    pub segments: Vec<IsolineSegment>,
    pub length: f64,
}

/// Nodal values shifted so that no vertex sits exactly on the level
/// (tie-break: +1e-12 of the field range).
fn tie_broken(values: &[f64], level: f64) -> Result<Vec<f64>, MeshError> {
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range == 0.0 {
        if lo == level {
            return Err(MeshError::DegenerateLevelSet);
        }
        return Ok(values.to_vec());
    }
    let eps = 1e-12 * range;
    Ok(values
        .iter()
        .map(|&v| if v == level { v + eps } else { v })
        .collect())
}

impl Mesh {
    /// Extract the discrete set `{field = level}` as segments, one per cut
    /// simplex. Errors if the level set is degenerate (constant field at the
    /// level, or no crossing at all).
    pub fn extract_isoline(&self, values: &[f64], level: f64) -> Result<Isoline, MeshError> {
        assert_eq!(values.len(), self.n_vertices());
        let vals = tie_broken(values, level)?;
        let per_simplex = crate::exec::map_indexed(self.n_simplices(), |t| {
            let v = self.simplex(t);
            let f = [vals[v[0]], vals[v[1]], vals[v[2]]];
            let below: Vec<usize> = (0..3).filter(|&k| f[k] < level).collect();
            if below.is_empty() || below.len() == 3 {
                return None;
            }
            // one vertex on its own side, two crossing edges
            let lone = if below.len() == 1 {
                below[0]
            } else {
                (0..3).find(|k| !below.contains(k)).unwrap()
            };
            let coords = self.simplex_coords(t);
            let cut = |i: usize, j: usize| -> Point {
                let s = (level - f[i]) / (f[j] - f[i]);
                [
                    coords[i][0] + s * (coords[j][0] - coords[i][0]),
                    coords[i][1] + s * (coords[j][1] - coords[i][1]),
                ]
            };
            let (j, k) = ((lone + 1) % 3, (lone + 2) % 3);
            Some(IsolineSegment {
                a: cut(lone, j),
                b: cut(lone, k),
                simplex: t,
            })
        });
        let segments: Vec<IsolineSegment> = per_simplex.into_iter().flatten().collect();
        if segments.is_empty() {
            return Err(MeshError::DegenerateLevelSet);
        }
        let length = segments.iter().map(|s| s.length()).sum();
        Ok(Isoline { segments, length })
    }

    /// Exact area of `{field < level}` under the piecewise linear
    /// representation, by clipping each simplex against the level set.
    pub fn sublevel_area(&self, values: &[f64], level: f64) -> f64 {
        assert_eq!(values.len(), self.n_vertices());
        let vals = match tie_broken(values, level) {
            Ok(v) => v,
            // constant field equal to the level: strict sublevel set is empty
            Err(_) => return 0.0,
        };
        crate::exec::sum_indexed(self.n_simplices(), |t| {
            let v = self.simplex(t);
            let f = [vals[v[0]], vals[v[1]], vals[v[2]]];
            let area = self.area(t);
            let below: Vec<usize> = (0..3).filter(|&k| f[k] < level).collect();
            match below.len() {
                0 => 0.0,
                3 => area,
                1 => {
                    let i = below[0];
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    let s1 = (level - f[i]) / (f[j] - f[i]);
                    let s2 = (level - f[i]) / (f[k] - f[i]);
                    area * s1 * s2
                }
                _ => {
                    let i = (0..3).find(|k| !below.contains(k)).unwrap();
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    let s1 = (f[i] - level) / (f[i] - f[j]);
                    let s2 = (f[i] - level) / (f[i] - f[k]);
                    area * (1.0 - s1 * s2)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_rectangle_mesh, Mesh, MeshError, Rect};

    fn nodal(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..mesh.n_vertices())
            .map(|v| {
                let p = mesh.vertex(v);
                f(p[0], p[1])
            })
            .collect()
    }

    #[test]
    fn straight_isoline_has_unit_length() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 64.0).unwrap();
        let phi = nodal(&m, |x, _| x - 0.5);
        let iso = m.extract_isoline(&phi, 0.0).unwrap();
        assert!((iso.length - 1.0).abs() < 1e-10);
        for s in &iso.segments {
            assert!((s.a[0] - 0.5).abs() < 1e-12 && (s.b[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_isoline_converges_to_circumference() {
        let r = 0.35;
        let exact = 2.0 * std::f64::consts::PI * r;
        let mut errs = Vec::new();
        for ta in [1.0 / 512.0, 1.0 / 2048.0] {
            let m = build_rectangle_mesh(Rect::unit(), ta).unwrap();
            let phi = nodal(&m, |x, y| (x - 0.5).powi(2) + (y - 0.5).powi(2) - r * r);
            let iso = m.extract_isoline(&phi, 0.0).unwrap();
            errs.push((iso.length - exact).abs());
        }
        assert!(errs[0] < 5e-3 * exact);
        // O(h^2): quartering the area halves h, error should drop ~4x
        assert!(errs[1] < 0.4 * errs[0]);
    }

    #[test]
    fn constant_field_is_degenerate() {
        let m = build_rectangle_mesh(Rect::unit(), 0.25).unwrap();
        let phi = vec![1.0; m.n_vertices()];
        assert!(matches!(
            m.extract_isoline(&phi, 0.0),
            Err(MeshError::DegenerateLevelSet)
        ));
        assert!(matches!(
            m.extract_isoline(&phi, 1.0),
            Err(MeshError::DegenerateLevelSet)
        ));
    }

    #[test]
    fn segments_lie_inside_their_simplex() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        let phi = nodal(&m, |x, y| (x - 0.4).powi(2) + (y - 0.6).powi(2) - 0.09);
        let iso = m.extract_isoline(&phi, 0.0).unwrap();
        let total: f64 = iso.segments.iter().map(|s| s.length()).sum();
        assert!((total - iso.length).abs() < 1e-12);
        for s in &iso.segments {
            for p in [s.a, s.b] {
                let bary = super::super::barycentric(m.simplex_coords(s.simplex), p);
                assert!(bary.iter().all(|&b| b >= -1e-10));
            }
        }
    }

    #[test]
    fn halfplane_area() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 64.0).unwrap();
        let phi = nodal(&m, |x, _| x - 0.5);
        // vertices sit exactly on the level; the tie-break shifts the clipped
        // area by O(1e-12 * field range)
        assert!((m.sublevel_area(&phi, 0.0) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn constant_below_gives_full_area() {
        let m = build_rectangle_mesh(Rect::unit(), 0.25).unwrap();
        let phi = vec![-1.0; m.n_vertices()];
        assert!((m.sublevel_area(&phi, 0.0) - 1.0).abs() < 1e-12);
        let phi = vec![2.0; m.n_vertices()];
        assert_eq!(m.sublevel_area(&phi, 0.0), 0.0);
    }

    #[test]
    fn disc_area_converges() {
        let r = 0.3;
        let exact = std::f64::consts::PI * r * r;
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 2048.0).unwrap();
        // signed distance interpolant
        let phi = nodal(&m, |x, y| {
            ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() - r
        });
        let a = m.sublevel_area(&phi, 0.0);
        assert!((a - exact).abs() < 2e-3 * exact);
    }

    #[test]
    fn complement_identity() {
        let m = build_rectangle_mesh(Rect::new(0.0, 0.0, 2.0, 1.0), 1.0 / 32.0).unwrap();
        let phi = nodal(&m, |x, y| (x - 0.7).sin() + 0.3 * (3.0 * y).cos());
        let c = 0.123456;
        let neg: Vec<f64> = phi.iter().map(|v| -v).collect();
        let sum = m.sublevel_area(&phi, c) + m.sublevel_area(&neg, -c);
        assert!((sum - 2.0).abs() < 2.0 * 1e-12);
    }

    #[test]
    fn isoline_length_invariant_under_refinement() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 8.0).unwrap();
        let phi = nodal(&m, |x, y| x + 0.3 * y - 0.55);
        let l0 = m.extract_isoline(&phi, 0.0).unwrap().length;
        let fine = m.refine_uniform().unwrap();
        let phi_fine = nodal(&fine, |x, y| x + 0.3 * y - 0.55);
        let l1 = fine.extract_isoline(&phi_fine, 0.0).unwrap().length;
        assert!((l0 - l1).abs() < 1e-12);
    }
}
