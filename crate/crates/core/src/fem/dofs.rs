use std::collections::HashMap;

use crate::mesh::{face_key, Mesh, TAG_METAL};
use crate::C64;

/// Local edges of a tet as vertex pairs, in the fixed local order.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Global edge numbering. Every edge is oriented from its lower to its higher
/// node index; each tet records, per local edge, the global id and `+1` or
/// `-1` depending on whether the local vertex order agrees.
///
/// Edges lying on a metallic face are constrained (`E × n = 0`) and carry no
/// system unknown; the remaining ones are numbered consecutively.
#[derive(Clone, Debug)]
pub struct EdgeDofMap {
    edges: Vec<[usize; 2]>,
    tet_edges: Vec<[usize; 6]>,
    tet_signs: Vec<[f64; 6]>,
    free_index: Vec<usize>,
    free_edges: Vec<usize>,
    n_tets: usize,
}

impl EdgeDofMap {
    pub fn build(mesh: &Mesh) -> Self {
        let mut ids: HashMap<[usize; 2], usize> = HashMap::with_capacity(mesh.n_tets() * 2);
        let mut edges = Vec::new();
        let mut tet_edges = Vec::with_capacity(mesh.n_tets());
        let mut tet_signs = Vec::with_capacity(mesh.n_tets());
        for t in mesh.tets() {
            let mut te = [0usize; 6];
            let mut ts = [0.0; 6];
            for (k, [i, j]) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (t.nodes[*i], t.nodes[*j]);
                let key = [a.min(b), a.max(b)];
                te[k] = *ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                ts[k] = if a < b { 1.0 } else { -1.0 };
            }
            tet_edges.push(te);
            tet_signs.push(ts);
        }
        let mut constrained = vec![false; edges.len()];
        for b in mesh.boundary().iter().filter(|b| b.tag == TAG_METAL) {
            let f = face_key(b.nodes);
            for [i, j] in [[0, 1], [0, 2], [1, 2]] {
                constrained[ids[&[f[i], f[j]]]] = true;
            }
        }
        let mut free_index = vec![usize::MAX; edges.len()];
        let mut free_edges = Vec::new();
        for (e, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[e] = free_edges.len();
                free_edges.push(e);
            }
        }
        Self { edges, tet_edges, tet_signs, free_index, free_edges, n_tets: mesh.n_tets() }
    }

    /// Total number of edges (DoFs before the metallic-wall elimination).
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of unknowns after eliminating metallic-wall edges.
    pub fn n_free(&self) -> usize {
        self.free_edges.len()
    }

    pub fn n_tets(&self) -> usize {
        self.n_tets
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn tet_edges(&self, t: usize) -> &[usize; 6] {
        &self.tet_edges[t]
    }

    pub fn tet_signs(&self, t: usize) -> &[f64; 6] {
        &self.tet_signs[t]
    }

    pub fn free_index(&self, e: usize) -> Option<usize> {
        let i = self.free_index[e];
        (i != usize::MAX).then_some(i)
    }

    /// Edge → system row, `usize::MAX` for constrained edges.
    pub fn free_index_table(&self) -> &[usize] {
        &self.free_index
    }

    pub fn free_edges(&self) -> &[usize] {
        &self.free_edges
    }

    pub fn is_constrained(&self, e: usize) -> bool {
        self.free_index[e] == usize::MAX
    }

    /// Drop constrained entries of a per-edge vector.
    pub fn restrict(&self, full: &[C64]) -> Vec<C64> {
        self.free_edges.iter().map(|&e| full[e]).collect()
    }

    /// Extend a vector of unknowns by zeros on constrained edges.
    pub fn extend(&self, free: &[C64]) -> Vec<C64> {
        let mut full = vec![C64::new(0.0, 0.0); self.edges.len()];
        for (&e, &v) in self.free_edges.iter().zip(free) {
            full[e] = v;
        }
        full
    }

    pub fn matches(&self, mesh: &Mesh) -> bool {
        self.n_tets == mesh.n_tets()
            && mesh.tets().first().is_none_or(|t| {
                let e = self.edges[self.tet_edges[0][0]];
                let (a, b) = (t.nodes[0], t.nodes[1]);
                e == [a.min(b), a.max(b)]
            })
    }
}
