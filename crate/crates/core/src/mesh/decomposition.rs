//! Overlapping decompositions and their edge-based partition of unity.

use super::{Mesh, MeshError};
use crate::fem::EdgeDofMap;

/// DoFs shared with a neighbouring subdomain, as `(local index here,
/// local index there)` pairs in increasing global order.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub shared: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subdomain {
    /// Tets of the non-overlapping part, sorted.
    pub core_tets: Vec<usize>,
    /// Tets of the overlapping subdomain, sorted; a superset of `core_tets`.
    pub tets: Vec<usize>,
    /// Restriction: sorted global (free) DoF indices of the subdomain.
    pub dofs: Vec<usize>,
    /// Partition-of-unity weight per local DoF.
    pub weights: Vec<f64>,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapDecomposition {
    pub delta: usize,
    pub subdomains: Vec<Subdomain>,
}

impl OverlapDecomposition {
    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }
}

/// Grow each part of `assignment` by `delta` layers of node-adjacent tets.
pub fn grow_overlap(mesh: &Mesh, assignment: &[usize], delta: usize) -> Result<OverlapDecomposition, MeshError> {
    if assignment.len() != mesh.n_tets() {
        return Err(MeshError::Decomposition(format!(
            "assignment has {} entries for {} tets",
            assignment.len(),
            mesh.n_tets()
        )));
    }
    let n_parts = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut core = vec![Vec::new(); n_parts];
    for (t, &p) in assignment.iter().enumerate() {
        core[p].push(t);
    }
    if let Some(p) = core.iter().position(Vec::is_empty) {
        return Err(MeshError::Decomposition(format!("subdomain {p} is empty")));
    }
    let (offsets, adj) = mesh.node_to_tets();
    let mut subdomains = Vec::with_capacity(n_parts);
    let mut in_set = vec![false; mesh.n_tets()];
    let mut node_seen = vec![false; mesh.n_nodes()];
    for core_tets in core {
        let mut tets = core_tets.clone();
        for &t in &tets {
            in_set[t] = true;
        }
        let mut frontier = tets.clone();
        for _ in 0..delta {
            let mut added = Vec::new();
            for &t in &frontier {
                for &n in &mesh.tets()[t].nodes {
                    if node_seen[n] {
                        continue;
                    }
                    node_seen[n] = true;
                    for &nt in &adj[offsets[n]..offsets[n + 1]] {
                        if !in_set[nt] {
                            in_set[nt] = true;
                            added.push(nt);
                        }
                    }
                }
            }
            tets.extend_from_slice(&added);
            frontier = added;
        }
        tets.sort_unstable();
        for &t in &tets {
            in_set[t] = false;
            for &n in &mesh.tets()[t].nodes {
                node_seen[n] = false;
            }
        }
        subdomains.push(Subdomain {
            core_tets,
            tets,
            dofs: Vec::new(),
            weights: Vec::new(),
            neighbors: Vec::new(),
        });
    }
    Ok(OverlapDecomposition { delta, subdomains })
}

/// Fill in restrictions, partition-of-unity weights and neighbour maps.
///
/// The nodal function `χ̃_i` is 1 on nodes of the core part and 0 elsewhere;
/// `χ_i = χ̃_i / Σ_j χ̃_j`, and a DoF's weight is `χ_i` at its edge midpoint.
pub fn build_partition_of_unity(
    decomp: &mut OverlapDecomposition,
    mesh: &Mesh,
    dof_map: &EdgeDofMap,
) -> Result<(), MeshError> {
    if decomp.delta == 0 {
        return Err(MeshError::Decomposition(
            "partition of unity requires an overlap of at least one layer".into(),
        ));
    }
    let n_nodes = mesh.n_nodes();
    let mut owners = vec![0u32; n_nodes];
    let mut core_nodes: Vec<Vec<bool>> = Vec::with_capacity(decomp.len());
    for s in &decomp.subdomains {
        let mut mark = vec![false; n_nodes];
        for &t in &s.core_tets {
            for &n in &mesh.tets()[t].nodes {
                mark[n] = true;
            }
        }
        for (n, &m) in mark.iter().enumerate() {
            owners[n] += m as u32;
        }
        core_nodes.push(mark);
    }
    assert!(owners.iter().all(|&c| c > 0), "every node belongs to some core part");

    let mut edge_seen = vec![false; dof_map.n_edges()];
    for (s, mark) in decomp.subdomains.iter_mut().zip(&core_nodes) {
        let mut dofs = Vec::new();
        for &t in &s.tets {
            for &e in dof_map.tet_edges(t) {
                if !edge_seen[e] {
                    edge_seen[e] = true;
                    if let Some(d) = dof_map.free_index(e) {
                        dofs.push((d, e));
                    }
                }
            }
        }
        for &t in &s.tets {
            for &e in dof_map.tet_edges(t) {
                edge_seen[e] = false;
            }
        }
        dofs.sort_unstable();
        let chi = |n: usize| if mark[n] { 1.0 / owners[n] as f64 } else { 0.0 };
        s.weights = dofs
            .iter()
            .map(|&(_, e)| {
                let [a, b] = dof_map.edge(e);
                0.5 * (chi(a) + chi(b))
            })
            .collect();
        s.dofs = dofs.into_iter().map(|(d, _)| d).collect();
    }

    let n = decomp.len();
    for i in 0..n {
        let mut neighbors = Vec::new();
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&decomp.subdomains[i].dofs, &decomp.subdomains[j].dofs);
            let (mut p, mut q) = (0, 0);
            let mut shared = Vec::new();
            while p < a.len() && q < b.len() {
                match a[p].cmp(&b[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        shared.push((p, q));
                        p += 1;
                        q += 1;
                    }
                }
            }
            if !shared.is_empty() {
                neighbors.push(Neighbor { id: j, shared });
            }
        }
        decomp.subdomains[i].neighbors = neighbors;
    }
    Ok(())
}
