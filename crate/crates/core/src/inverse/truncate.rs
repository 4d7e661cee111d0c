//! Per-ring domain truncation for layer-by-layer reconstruction.

use std::collections::HashMap;

use super::InverseError;
use crate::mesh::{exterior_faces, face_key, BoundaryTri, ChamberLayout, Mesh, Tet, TAG_ABSORBING};

/// A sub-mesh with maps back to its parent.
#[derive(Clone, Debug)]
pub struct TruncatedMesh {
    pub mesh: Mesh,
    /// Parent node of each sub-mesh node.
    pub nodes: Vec<usize>,
    /// Parent tet of each sub-mesh tet.
    pub tets: Vec<usize>,
    /// Parent port (zero-based) of each sub-mesh port (zero-based).
    pub ports: Vec<usize>,
    /// Transmitting ports in sub-mesh numbering, zero-based.
    pub transmitters: Vec<usize>,
    /// Kept rings, inclusive.
    pub rings: (usize, usize),
    /// Sub-mesh `z` range.
    pub z_range: (f64, f64),
}

/// Keep ring `ring` and at most one ring on each side, cutting at the gap
/// planes between rings. Cut surfaces become absorbing.
pub fn truncate_for_ring(mesh: &Mesh, layout: &ChamberLayout, ring: usize) -> Result<TruncatedMesh, InverseError> {
    let n_rings = layout.ring_z.len();
    if ring >= n_rings {
        return Err(InverseError::Config(format!("ring {ring} out of range (chamber has {n_rings})")));
    }
    if mesh.n_ports() != layout.n_ports() {
        return Err(InverseError::Config(format!("mesh has {} ports, layout {}", mesh.n_ports(), layout.n_ports())));
    }
    let lo = ring.saturating_sub(1);
    let hi = (ring + 1).min(n_rings - 1);
    let z_min = if lo == 0 { f64::NEG_INFINITY } else { layout.gap_plane(lo - 1) };
    let z_max = if hi + 1 == n_rings { f64::INFINITY } else { layout.gap_plane(hi) };

    let mut node_new = vec![usize::MAX; mesh.n_nodes()];
    let mut nodes = Vec::new();
    let mut kept_tets = Vec::new();
    let mut tets = Vec::new();
    for (t, tet) in mesh.tets().iter().enumerate() {
        let z = mesh.tet_centroid(t).z;
        if z < z_min || z > z_max {
            continue;
        }
        let n = tet.nodes.map(|v| {
            if node_new[v] == usize::MAX {
                node_new[v] = nodes.len();
                nodes.push(v);
            }
            node_new[v]
        });
        kept_tets.push(t);
        tets.push(Tet { nodes: n, region: tet.region });
    }

    let per_ring = layout.spec.antennas_per_ring;
    let first_tag = lo * per_ring;
    let parent_tags = mesh.boundary_tags();
    let mut boundary = Vec::new();
    for f in exterior_faces(&tets) {
        let parent = face_key(f.map(|v| nodes[v]));
        let tag = match parent_tags.get(&parent) {
            Some(&t) if t > 0 => t - first_tag as i32,
            Some(&t) => t,
            None => TAG_ABSORBING,
        };
        boundary.push(BoundaryTri { nodes: f, tag });
    }
    let points = nodes.iter().map(|&v| mesh.nodes()[v]).collect();
    let sub = Mesh::new(points, tets, boundary)?;

    let ports: Vec<usize> = (first_tag..(hi + 1) * per_ring).collect();
    if sub.n_ports() != ports.len() {
        return Err(InverseError::Config(format!(
            "truncation kept {} ports, expected {}",
            sub.n_ports(),
            ports.len()
        )));
    }
    let transmitters = ((ring - lo) * per_ring..(ring - lo + 1) * per_ring).collect();
    Ok(TruncatedMesh { mesh: sub, nodes, tets: kept_tets, ports, transmitters, rings: (lo, hi), z_range: (z_min, z_max) })
}

impl TruncatedMesh {
    /// Restrict a parent nodal field.
    pub fn restrict<T: Copy>(&self, parent: &[T]) -> Vec<T> {
        self.nodes.iter().map(|&v| parent[v]).collect()
    }

    /// Sub-mesh node of each parent node present.
    pub fn node_lookup(&self) -> HashMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect()
    }
}
