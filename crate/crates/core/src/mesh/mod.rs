//! Tetrahedral meshes with region and boundary-surface tags.

mod chamber;
mod decomposition;
mod io;
mod partition;

use std::collections::HashMap;

use crate::Vec3;

pub use chamber::{generate_chamber_mesh, ChamberLayout, ChamberSpec};
pub use decomposition::{build_partition_of_unity, grow_overlap, Neighbor, OverlapDecomposition, Subdomain};
pub use io::{load_mesh, parse_msh, write_msh, write_msh_string};
pub use partition::{partition, PartitionStrategy};

/// Surface tag of perfectly conducting walls.
pub const TAG_METAL: i32 = 0;
/// Surface tag of non-port impedance (absorbing) surfaces.
pub const TAG_ABSORBING: i32 = -1;
/// Region tag of the imaging region, where the permittivity is a free parameter.
pub const REGION_IMAGING: i32 = 0;
/// Region tag of fixed background material (ceramic).
pub const REGION_FIXED: i32 = 1;

/// Local faces of a tetrahedron; face `k` is opposite vertex `k`.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("infeasible chamber: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Decomposition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tet {
    pub nodes: [usize; 4],
    pub region: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryTri {
    pub nodes: [usize; 3],
    pub tag: i32,
}

/// A validated tetrahedral mesh.
///
/// Tets are stored with positive orientation. Boundary triangles cover the
/// topological boundary exactly once; tag `0` is metal, `-1` absorbing and
/// `1..=n_ports` are port sections.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<Vec3>,
    tets: Vec<Tet>,
    boundary: Vec<BoundaryTri>,
    n_ports: usize,
}

/// Sorted node triple identifying a face independently of orientation.
pub fn face_key(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl Mesh {
    /// Validate and canonicalise a mesh. Negatively oriented tets get two
    /// vertices swapped; degenerate ones are rejected.
    pub fn new(nodes: Vec<Vec3>, mut tets: Vec<Tet>, boundary: Vec<BoundaryTri>) -> Result<Self, MeshError> {
        let nn = nodes.len();
        for (i, t) in tets.iter().enumerate() {
            if let Some(&bad) = t.nodes.iter().find(|&&n| n >= nn) {
                return Err(MeshError::Invalid(format!("tet {i} references missing node {bad}")));
            }
            let mut s = t.nodes;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::Invalid(format!("tet {i} has repeated nodes")));
            }
        }
        for (i, b) in boundary.iter().enumerate() {
            if let Some(&bad) = b.nodes.iter().find(|&&n| n >= nn) {
                return Err(MeshError::Invalid(format!("boundary triangle {i} references missing node {bad}")));
            }
            if b.tag < TAG_ABSORBING {
                return Err(MeshError::Invalid(format!("boundary triangle {i} has unknown tag {}", b.tag)));
            }
        }

        for (i, t) in tets.iter_mut().enumerate() {
            let p = t.nodes.map(|n| nodes[n]);
            let vol = signed_volume(&p);
            let scale = (1..4)
                .flat_map(|a| (0..a).map(move |b| (a, b)))
                .map(|(a, b)| (p[a] - p[b]).norm())
                .fold(0.0, f64::max);
            if !(vol.abs() > 1e-12 * scale.powi(3)) {
                return Err(MeshError::Invalid(format!("tet {i} has non-positive volume")));
            }
            if vol < 0.0 {
                t.nodes.swap(2, 3);
            }
        }

        let mut faces: HashMap<[usize; 3], u32> = HashMap::with_capacity(tets.len() * 3);
        for t in &tets {
            for f in TET_FACES {
                *faces.entry(face_key(f.map(|k| t.nodes[k]))).or_insert(0) += 1;
            }
        }
        if let Some((f, _)) = faces.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::Invalid(format!("face {f:?} is shared by more than two tets")));
        }
        let mut covered: HashMap<[usize; 3], usize> = HashMap::new();
        for (i, b) in boundary.iter().enumerate() {
            let key = face_key(b.nodes);
            if faces.get(&key) != Some(&1) {
                return Err(MeshError::Invalid(format!(
                    "boundary triangle {i} is not a face of exactly one tet"
                )));
            }
            if covered.insert(key, i).is_some() {
                return Err(MeshError::Invalid(format!("boundary triangle {i} covers an already tagged face")));
            }
        }
        let n_boundary_faces = faces.values().filter(|&&c| c == 1).count();
        if n_boundary_faces != covered.len() {
            return Err(MeshError::Invalid(format!(
                "uncovered boundary face ({} of {} boundary faces tagged)",
                covered.len(),
                n_boundary_faces
            )));
        }

        let n_ports = boundary.iter().map(|b| b.tag).max().unwrap_or(0).max(0) as usize;
        let mut seen = vec![false; n_ports + 1];
        for b in &boundary {
            if b.tag > 0 {
                seen[b.tag as usize] = true;
            }
        }
        if let Some(p) = (1..=n_ports).find(|&p| !seen[p]) {
            return Err(MeshError::Invalid(format!("port tag {p} has no triangles")));
        }

        Ok(Self { nodes, tets, boundary, n_ports })
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn boundary(&self) -> &[BoundaryTri] {
        &self.boundary
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    /// Number of port sections (tags `1..=n_ports`).
    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn tet_points(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].nodes.map(|n| self.nodes[n])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.tet_points(t))
    }

    pub fn tet_centroid(&self, t: usize) -> Vec3 {
        let p = self.tet_points(t);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Axis-aligned bounding box `(min, max)` of all nodes.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Boundary triangles of port `tag`.
    pub fn port_triangles(&self, tag: usize) -> impl Iterator<Item = &BoundaryTri> {
        self.boundary.iter().filter(move |b| b.tag == tag as i32)
    }

    /// Map from sorted face key to its surface tag.
    pub fn boundary_tags(&self) -> HashMap<[usize; 3], i32> {
        self.boundary.iter().map(|b| (face_key(b.nodes), b.tag)).collect()
    }

    /// Node-to-tet incidence in compressed form: tets around node `n` are
    /// `tets[offsets[n]..offsets[n + 1]]`, in increasing order.
    pub fn node_to_tets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut offsets = vec![0usize; self.nodes.len() + 1];
        for t in &self.tets {
            for &n in &t.nodes {
                offsets[n + 1] += 1;
            }
        }
        for i in 0..self.nodes.len() {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![0usize; offsets[self.nodes.len()]];
        for (ti, t) in self.tets.iter().enumerate() {
            for &n in &t.nodes {
                adj[fill[n]] = ti;
                fill[n] += 1;
            }
        }
        (offsets, adj)
    }

    /// Outward unit normal and area of a boundary triangle, oriented away
    /// from its owning tet.
    pub fn outward_normal(&self, tri: [usize; 3], opposite: usize) -> (Vec3, f64) {
        let p = tri.map(|n| self.nodes[n]);
        let c = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let area = 0.5 * c.norm();
        let mut n = c / c.norm();
        if n.dot(&(self.nodes[opposite] - p[0])) > 0.0 {
            n = -n;
        }
        (n, area)
    }

    /// For every tagged boundary triangle, the tet that owns it and the
    /// local vertex opposite to it.
    pub fn boundary_owners(&self) -> Vec<(usize, usize)> {
        let index: HashMap<[usize; 3], usize> =
            self.boundary.iter().enumerate().map(|(i, b)| (face_key(b.nodes), i)).collect();
        let mut owners = vec![(usize::MAX, usize::MAX); self.boundary.len()];
        for (ti, t) in self.tets.iter().enumerate() {
            for (k, f) in TET_FACES.iter().enumerate() {
                if let Some(&b) = index.get(&face_key(f.map(|l| t.nodes[l]))) {
                    owners[b] = (ti, k);
                }
            }
        }
        owners
    }
}

pub(crate) fn signed_volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Unit cube `[0,1]^3` split into `n^3` sub-cubes of six tets each, all
/// sharing the sub-cube main diagonal. Every boundary face gets `tag`.
pub fn unit_cube_mesh(n: usize, tag: i32) -> Mesh {
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                nodes.push(Vec3::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }
    // Kuhn subdivision: one tet per permutation of the axes.
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut v = [0usize; 4];
                    v[0] = idx(c[0], c[1], c[2]);
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        v[s + 1] = idx(c[0], c[1], c[2]);
                    }
                    tets.push(Tet { nodes: v, region: REGION_IMAGING });
                }
            }
        }
    }
    let boundary = exterior_faces(&tets).into_iter().map(|f| BoundaryTri { nodes: f, tag }).collect();
    Mesh::new(nodes, tets, boundary).expect("structured cube mesh is valid")
}

/// Faces appearing in exactly one tet, in deterministic (sorted) order.
pub fn exterior_faces(tets: &[Tet]) -> Vec<[usize; 3]> {
    let mut count: HashMap<[usize; 3], u32> = HashMap::new();
    for t in tets {
        for f in TET_FACES {
            *count.entry(face_key(f.map(|k| t.nodes[k]))).or_insert(0) += 1;
        }
    }
    let mut out: Vec<[usize; 3]> = count.into_iter().filter(|&(_, c)| c == 1).map(|(f, _)| f).collect();
    out.sort_unstable();
    out
}
