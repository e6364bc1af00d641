//! Newest-vertex bisection with closure, and tree-based coarsening.

use super::{edge_key, Mesh, MeshError, Point, TriNode};
use std::collections::HashMap;

/// Work structure shared by refine and coarsen: the forest plus a live
/// edge-to-leaves map for neighbor queries during bisection.
struct Arena {
    verts: Vec<Point>,
    nodes: Vec<TriNode>,
    edge_leaves: HashMap<(u32, u32), [u32; 2]>,
    edge_midpoints: HashMap<(u32, u32), u32>,
}

impl Arena {
    fn from_mesh(mesh: &Mesh) -> Self {
        let mut a = Self {
            verts: mesh.verts.clone(),
            nodes: mesh.nodes.clone(),
            edge_leaves: HashMap::new(),
            edge_midpoints: HashMap::new(),
        };
        for id in 0..a.nodes.len() {
            if a.nodes[id].children.is_none() {
                a.register_leaf(id as u32);
            } else {
                let n = &a.nodes[id];
                a.edge_midpoints
                    .insert(edge_key(n.verts[1], n.verts[2]), n.midpoint);
            }
        }
        a
    }

    fn register_leaf(&mut self, id: u32) {
        let v = self.nodes[id as usize].verts;
        for k in 0..3 {
            let e = edge_key(v[(k + 1) % 3], v[(k + 2) % 3]);
            let slot = self.edge_leaves.entry(e).or_insert([u32::MAX; 2]);
            if slot[0] == u32::MAX {
                slot[0] = id;
            } else {
                debug_assert!(slot[1] == u32::MAX, "face shared by >2 leaves");
                slot[1] = id;
            }
        }
    }

    fn unregister_leaf(&mut self, id: u32) {
        let v = self.nodes[id as usize].verts;
        for k in 0..3 {
            let e = edge_key(v[(k + 1) % 3], v[(k + 2) % 3]);
            if let Some(slot) = self.edge_leaves.get_mut(&e) {
                if slot[0] == id {
                    slot[0] = slot[1];
                    slot[1] = u32::MAX;
                } else if slot[1] == id {
                    slot[1] = u32::MAX;
                }
                if slot[0] == u32::MAX {
                    self.edge_leaves.remove(&e);
                }
            }
        }
    }

    fn leaf_across(&self, edge: (u32, u32), not: u32) -> Option<u32> {
        let slot = self.edge_leaves.get(&edge)?;
        if slot[0] != u32::MAX && slot[0] != not {
            Some(slot[0])
        } else if slot[1] != u32::MAX && slot[1] != not {
            Some(slot[1])
        } else {
            None
        }
    }

    fn midpoint_of(&mut self, edge: (u32, u32)) -> u32 {
        if let Some(&m) = self.edge_midpoints.get(&edge) {
            return m;
        }
        let a = self.verts[edge.0 as usize];
        let b = self.verts[edge.1 as usize];
        let m = self.verts.len() as u32;
        self.verts.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        self.edge_midpoints.insert(edge, m);
        m
    }

    /// Split leaf `id` at the midpoint of its refinement edge. The caller
    /// guarantees compatibility (neighbor shares the refinement edge).
    fn split(&mut self, id: u32) {
        debug_assert!(self.nodes[id as usize].children.is_none());
        let v = self.nodes[id as usize].verts;
        let m = self.midpoint_of(edge_key(v[1], v[2]));
        self.unregister_leaf(id);
        let c1 = self.nodes.len() as u32;
        let c2 = c1 + 1;
        self.nodes.push(TriNode::leaf([m, v[0], v[1]], Some(id)));
        self.nodes.push(TriNode::leaf([m, v[2], v[0]], Some(id)));
        let n = &mut self.nodes[id as usize];
        n.children = Some([c1, c2]);
        n.midpoint = m;
        self.register_leaf(c1);
        self.register_leaf(c2);
    }

    /// Bisect leaf `id`, first recursively bisecting neighbors whose
    /// refinement edge does not match (closure).
    fn bisect_with_closure(&mut self, id: u32) -> Result<(), MeshError> {
        let mut stack = vec![id];
        let budget = 64 * (self.nodes.len() + 64);
        let mut spent = 0usize;
        while let Some(&top) = stack.last() {
            spent += 1;
            if spent > budget {
                return Err(MeshError::ClosureDiverged);
            }
            if self.nodes[top as usize].children.is_some() {
                stack.pop();
                continue;
            }
            let edge = self.nodes[top as usize].refinement_edge();
            match self.leaf_across(edge, top) {
                None => {
                    self.split(top);
                    stack.pop();
                }
                Some(nb) => {
                    if self.nodes[nb as usize].refinement_edge() == edge {
                        self.split(top);
                        self.split(nb);
                        stack.pop();
                    } else {
                        stack.push(nb);
                    }
                }
            }
        }
        Ok(())
    }

    /// Drop dead nodes and unused vertices, preserving relative order, and
    /// rebuild a mesh.
    fn compact(self, extent: super::Rect, dead: &[bool]) -> Mesh {
        let mut node_map = vec![u32::MAX; self.nodes.len()];
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            if !dead[id] {
                node_map[id] = nodes.len() as u32;
                nodes.push(node.clone());
            }
        }
        let mut used = vec![false; self.verts.len()];
        for n in &nodes {
            for &v in &n.verts {
                used[v as usize] = true;
            }
            if n.children.is_some() {
                used[n.midpoint as usize] = true;
            }
        }
        let mut vert_map = vec![u32::MAX; self.verts.len()];
        let mut verts = Vec::with_capacity(self.verts.len());
        for (v, &u) in used.iter().enumerate() {
            if u {
                vert_map[v] = verts.len() as u32;
                verts.push(self.verts[v]);
            }
        }
        for n in &mut nodes {
            for v in &mut n.verts {
                *v = vert_map[*v as usize];
            }
            if n.children.is_some() {
                n.midpoint = vert_map[n.midpoint as usize];
                let [c1, c2] = n.children.unwrap();
                n.children = Some([node_map[c1 as usize], node_map[c2 as usize]]);
            }
            if let Some(p) = n.parent {
                n.parent = Some(node_map[p as usize]);
            }
        }
        Mesh::from_arena(extent, verts, nodes)
    }
}

impl Mesh {
    /// Bisect the marked simplices (indices into the active list), restoring
    /// conformity by closure refinement.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh, MeshError> {
        self.adapt(marked, &[])
    }

    /// Merge sibling pairs whose members are all marked and whose removal
    /// keeps the mesh conforming. Marks on anything else are ignored.
    pub fn coarsen(&self, marked: &[usize]) -> Result<Mesh, MeshError> {
        self.adapt(&[], marked)
    }

    /// Combined coarsen-then-refine in one pass. The two sets should be
    /// disjoint; any simplex in both is refined only.
    pub fn adapt(&self, refine: &[usize], coarsen: &[usize]) -> Result<Mesh, MeshError> {
        if refine.is_empty() && coarsen.is_empty() {
            return Ok(self.clone());
        }
        let mut refine_flag = vec![false; self.n_simplices()];
        for &t in refine {
            assert!(t < self.n_simplices(), "marked simplex out of range");
            refine_flag[t] = true;
        }
        let mut coarsen_flag = vec![false; self.n_simplices()];
        for &t in coarsen {
            assert!(t < self.n_simplices(), "marked simplex out of range");
            coarsen_flag[t] = !refine_flag[t];
        }

        let mut arena = Arena::from_mesh(self);
        let mut dead = vec![false; arena.nodes.len()];

        // Coarsening pass. A bisection midpoint can be removed only if every
        // leaf around it is a marked child of a pair split at that midpoint;
        // then all those pairs merge simultaneously and no hanging node forms.
        if !coarsen.is_empty() {
            let node_of_pos: Vec<u32> = self.active.clone();
            let mergeable = |parent: u32, arena: &Arena, flags: &dyn Fn(u32) -> bool| -> bool {
                let [c1, c2] = arena.nodes[parent as usize].children.unwrap();
                arena.nodes[c1 as usize].children.is_none()
                    && arena.nodes[c2 as usize].children.is_none()
                    && flags(c1)
                    && flags(c2)
            };
            let mut marked_leaf = vec![false; arena.nodes.len()];
            for (pos, &flag) in coarsen_flag.iter().enumerate() {
                if flag {
                    marked_leaf[node_of_pos[pos] as usize] = true;
                }
            }
            // candidate parents, deduplicated, in node order
            let mut candidates: Vec<u32> = Vec::new();
            for (pos, &flag) in coarsen_flag.iter().enumerate() {
                if !flag {
                    continue;
                }
                if let Some(p) = arena.nodes[node_of_pos[pos] as usize].parent {
                    if candidates.last() != Some(&p) && !candidates.contains(&p) {
                        if mergeable(p, &arena, &|c| marked_leaf[c as usize]) {
                            candidates.push(p);
                        }
                    }
                }
            }
            let mut cand_by_mid: HashMap<u32, Vec<u32>> = HashMap::new();
            for &p in &candidates {
                cand_by_mid
                    .entry(arena.nodes[p as usize].midpoint)
                    .or_default()
                    .push(p);
            }
            let mut child_of_candidate = vec![false; arena.nodes.len()];
            for &p in &candidates {
                let [c1, c2] = arena.nodes[p as usize].children.unwrap();
                child_of_candidate[c1 as usize] = true;
                child_of_candidate[c2 as usize] = true;
            }
            for (&mid, parents) in cand_by_mid.iter() {
                // every leaf touching the midpoint must merge away, and all
                // merging pairs here must have been split exactly at it
                let removable = self.vertex_star[mid as usize].iter().all(|&pos| {
                    let nid = node_of_pos[pos as usize];
                    child_of_candidate[nid as usize]
                        && parents.contains(&arena.nodes[nid as usize].parent.unwrap())
                });
                if !removable {
                    continue;
                }
                for &p in parents {
                    let [c1, c2] = arena.nodes[p as usize].children.unwrap();
                    arena.unregister_leaf(c1);
                    arena.unregister_leaf(c2);
                    dead[c1 as usize] = true;
                    dead[c2 as usize] = true;
                    let edge = arena.nodes[p as usize].refinement_edge();
                    arena.edge_midpoints.remove(&edge);
                    let n = &mut arena.nodes[p as usize];
                    n.children = None;
                    n.midpoint = u32::MAX;
                    arena.register_leaf(p);
                }
            }
        }

        // Refinement pass.
        for (pos, &flag) in refine_flag.iter().enumerate() {
            if flag {
                let nid = self.active[pos];
                // may already be split as closure of an earlier mark
                if arena.nodes[nid as usize].children.is_none() {
                    arena.bisect_with_closure(nid)?;
                }
            }
        }

        dead.resize(arena.nodes.len(), false);
        Ok(arena.compact(self.extent, &dead))
    }

    /// Uniform refinement: bisect every simplex twice, halving the mesh size.
    pub fn refine_uniform(&self) -> Result<Mesh, MeshError> {
        let all: Vec<usize> = (0..self.n_simplices()).collect();
        let once = self.refine(&all)?;
        let all: Vec<usize> = (0..once.n_simplices()).collect();
        once.refine(&all)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_rectangle_mesh, Rect};

    #[test]
    fn empty_mark_is_identity() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        let r = m.refine(&[]).unwrap();
        assert_eq!(r.n_simplices(), m.n_simplices());
        assert_eq!(r.n_vertices(), m.n_vertices());
        let c = m.coarsen(&[]).unwrap();
        assert_eq!(c.n_simplices(), m.n_simplices());
    }

    #[test]
    fn single_mark_on_smallest_mesh() {
        // On the 4-simplex criss-cross every refinement edge lies on the
        // boundary, so one mark bisects exactly one simplex.
        let m = build_rectangle_mesh(Rect::unit(), 0.5).unwrap();
        let r = m.refine(&[1]).unwrap();
        assert_eq!(r.n_simplices(), 5);
        r.validate().unwrap();
        assert!((r.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mark_all_doubles_count() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        let all: Vec<usize> = (0..m.n_simplices()).collect();
        let r = m.refine(&all).unwrap();
        // compatible initial labeling: closure adds nothing on mark-all
        assert_eq!(r.n_simplices(), 2 * m.n_simplices());
        r.validate().unwrap();
    }

    #[test]
    fn closure_keeps_conformity() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        // refine a single interior simplex a few levels deep
        let mut mesh = m;
        for _ in 0..6 {
            let t = mesh.n_simplices() / 2;
            mesh = mesh.refine(&[t]).unwrap();
            mesh.validate().unwrap();
        }
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refine_coarsen_roundtrip_restores_vertices() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 8.0).unwrap();
        let marks = vec![0, 3, 5];
        let fine = m.refine(&marks).unwrap();
        assert!(fine.n_simplices() > m.n_simplices());
        let all: Vec<usize> = (0..fine.n_simplices()).collect();
        let back = fine.coarsen(&all).unwrap();
        assert_eq!(back.n_vertices(), m.n_vertices());
        assert_eq!(back.n_simplices(), m.n_simplices());
        for v in 0..m.n_vertices() {
            assert_eq!(back.vertex(v), m.vertex(v));
        }
        back.validate().unwrap();
    }

    #[test]
    fn half_marked_pair_is_untouched() {
        let m = build_rectangle_mesh(Rect::unit(), 0.5).unwrap();
        let fine = m.refine(&[0]).unwrap();
        // children of the split simplex are two of the active simplices;
        // find one child and mark only it
        let child = (0..fine.n_simplices())
            .find(|&t| fine.area(t) < 0.2)
            .unwrap();
        let c = fine.coarsen(&[child]).unwrap();
        assert_eq!(c.n_simplices(), fine.n_simplices());
    }

    #[test]
    fn coarsening_never_unrefines_roots() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 32.0).unwrap();
        let all: Vec<usize> = (0..m.n_simplices()).collect();
        let c = m.coarsen(&all).unwrap();
        assert_eq!(c.n_simplices(), m.n_simplices());
    }

    #[test]
    fn deep_roundtrip_through_adapt() {
        let m = build_rectangle_mesh(Rect::unit(), 1.0 / 8.0).unwrap();
        let all: Vec<usize> = (0..m.n_simplices()).collect();
        let f1 = m.refine(&all).unwrap();
        let all1: Vec<usize> = (0..f1.n_simplices()).collect();
        let f2 = f1.refine(&all1).unwrap();
        // coarsen everything twice
        let b1 = f2
            .coarsen(&(0..f2.n_simplices()).collect::<Vec<_>>())
            .unwrap();
        let b0 = b1
            .coarsen(&(0..b1.n_simplices()).collect::<Vec<_>>())
            .unwrap();
        assert_eq!(b0.n_simplices(), m.n_simplices());
        assert_eq!(b0.n_vertices(), m.n_vertices());
    }

    #[test]
    fn area_preserved_across_random_cycles() {
        let mut mesh = build_rectangle_mesh(Rect::new(0.0, 0.0, 2.0, 1.0), 0.1).unwrap();
        let mut seed = 12345u64;
        for round in 0..8 {
            let mut marks = Vec::new();
            for t in 0..mesh.n_simplices() {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (seed >> 33) % 3 == 0 {
                    marks.push(t);
                }
            }
            mesh = if round % 2 == 0 {
                mesh.refine(&marks).unwrap()
            } else {
                mesh.coarsen(&marks).unwrap()
            };
            mesh.validate().unwrap();
            assert!((mesh.total_area() - 2.0).abs() < 2.0 * 1e-12);
        }
    }
}
