//! Non-overlapping partitioning of tets into subdomains.

use std::collections::VecDeque;

use super::{Mesh, MeshError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PartitionStrategy {
    /// Recursive coordinate bisection of tet centroids. A set destined for
    /// `k` parts is split along the axis of largest centroid extent (ties go
    /// to x, then y, then z) into `floor(k/2)` and `ceil(k/2)` parts, with
    /// tet counts proportional to the part counts.
    CoordinateBisection,
    /// Breadth-first growth over face-adjacent tets, seeded at the lowest
    /// unassigned tet index.
    GreedyGraph,
}

/// Assign every tet to one of `n_subdomains` parts.
pub fn partition(mesh: &Mesh, n_subdomains: usize, strategy: PartitionStrategy) -> Result<Vec<usize>, MeshError> {
    if n_subdomains == 0 || n_subdomains > mesh.n_tets() {
        return Err(MeshError::Decomposition(format!(
            "cannot split {} tets into {n_subdomains} subdomains",
            mesh.n_tets()
        )));
    }
    let mut assignment = vec![0usize; mesh.n_tets()];
    match strategy {
        PartitionStrategy::CoordinateBisection => {
            let centroids: Vec<[f64; 3]> = (0..mesh.n_tets()).map(|t| mesh.tet_centroid(t).into()).collect();
            let all: Vec<usize> = (0..mesh.n_tets()).collect();
            bisect(&centroids, all, 0, n_subdomains, &mut assignment);
        }
        PartitionStrategy::GreedyGraph => greedy(mesh, n_subdomains, &mut assignment),
    }
    Ok(assignment)
}

fn bisect(c: &[[f64; 3]], mut set: Vec<usize>, first: usize, parts: usize, out: &mut [usize]) {
    if parts == 1 {
        for t in set {
            out[t] = first;
        }
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &t in &set {
        for d in 0..3 {
            lo[d] = lo[d].min(c[t][d]);
            hi[d] = hi[d].max(c[t][d]);
        }
    }
    let mut axis = 0;
    for d in 1..3 {
        if hi[d] - lo[d] > hi[axis] - lo[axis] {
            axis = d;
        }
    }
    set.sort_by(|&a, &b| c[a][axis].total_cmp(&c[b][axis]).then(a.cmp(&b)));
    let left_parts = parts / 2;
    let cut = (set.len() * left_parts + parts / 2) / parts;
    let right = set.split_off(cut);
    bisect(c, set, first, left_parts, out);
    bisect(c, right, first + left_parts, parts - left_parts, out);
}

fn greedy(mesh: &Mesh, parts: usize, out: &mut [usize]) {
    let n = mesh.n_tets();
    let neighbors = face_neighbors(mesh);
    let mut assigned = vec![false; n];
    let mut next_seed = 0;
    let mut done = 0;
    for p in 0..parts {
        let target = (n * (p + 1)) / parts - (n * p) / parts;
        let mut queue = VecDeque::new();
        let mut taken = 0;
        while taken < target {
            if queue.is_empty() {
                while assigned[next_seed] {
                    next_seed += 1;
                }
                assigned[next_seed] = true;
                queue.push_back(next_seed);
                out[next_seed] = p;
                taken += 1;
                continue;
            }
            let t = queue.pop_front().unwrap();
            for &nb in &neighbors[t] {
                if taken < target && !assigned[nb] {
                    assigned[nb] = true;
                    out[nb] = p;
                    taken += 1;
                    queue.push_back(nb);
                }
            }
        }
        done += taken;
    }
    debug_assert_eq!(done, n);
}

fn face_neighbors(mesh: &Mesh) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let mut owner: HashMap<[usize; 3], usize> = HashMap::new();
    let mut nb = vec![Vec::new(); mesh.n_tets()];
    for (ti, t) in mesh.tets().iter().enumerate() {
        for f in super::TET_FACES {
            let key = super::face_key(f.map(|k| t.nodes[k]));
            if let Some(o) = owner.insert(key, ti) {
                nb[o].push(ti);
                nb[ti].push(o);
            }
        }
    }
    for v in &mut nb {
        v.sort_unstable();
    }
    nb
}
