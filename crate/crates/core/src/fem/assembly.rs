//! Assembly of the complex curl-curl operator and port right-hand sides.

use faer::Mat;
use rayon::prelude::*;

use super::dofs::EdgeDofMap;
use super::element::TetElement;
use super::port::PortSet;
use super::{FemError, MaterialField, PhysicsParams};
use crate::mesh::{Mesh, REGION_IMAGING, TAG_METAL};
use crate::sparse::CsrMatrix;
use crate::C64;

const CHUNK: usize = 256;

/// An impedance term `coeff ∫_F (E×n)·(v×n)` on the face of tet `tet`
/// opposite its local vertex `opposite`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceTerm {
    pub tet: usize,
    pub opposite: usize,
    pub coeff: C64,
}

/// `iβ` impedance terms on every port and absorbing triangle.
pub fn impedance_surfaces(mesh: &Mesh, beta: C64) -> Vec<SurfaceTerm> {
    let coeff = C64::new(0.0, 1.0) * beta;
    mesh.boundary()
        .iter()
        .zip(mesh.boundary_owners())
        .filter(|(b, _)| b.tag != TAG_METAL)
        .map(|(_, (tet, opposite))| SurfaceTerm { tet, opposite, coeff })
        .collect()
}

/// Assembled linear system `A X = B`, one right-hand side per port.
#[derive(Clone, Debug)]
pub struct ComplexSparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Mat<C64>,
    pub n: usize,
}

/// Assemble `∫∇×u·∇×v − κ u·v` over `tets` plus the surface terms, mapping
/// global edges to rows through `index` (`usize::MAX` drops the edge).
#[allow(clippy::too_many_arguments)]
pub fn assemble_operator(
    mesh: &Mesh,
    dof_map: &EdgeDofMap,
    material: &MaterialField,
    params: &PhysicsParams,
    tets: &[usize],
    surfaces: &[SurfaceTerm],
    index: &[usize],
    n: usize,
) -> CsrMatrix {
    let volume: Vec<Vec<(usize, usize, C64)>> = tets
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len() * 36);
            for &t in chunk {
                let elem = TetElement::from_mesh(mesh, dof_map, t);
                let k = elem.stiffness();
                let m = elem.mass(&material.tet_kappa(mesh, t, params));
                let rows = dof_map.tet_edges(t).map(|e| index[e]);
                for a in 0..6 {
                    if rows[a] == usize::MAX {
                        continue;
                    }
                    for b in 0..6 {
                        if rows[b] != usize::MAX {
                            out.push((rows[a], rows[b], k[a][b] - m[a][b]));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut triplets: Vec<(usize, usize, C64)> = volume.into_iter().flatten().collect();
    for s in surfaces {
        let elem = TetElement::from_mesh(mesh, dof_map, s.tet);
        let f = elem.face_mass(s.opposite);
        let rows = dof_map.tet_edges(s.tet).map(|e| index[e]);
        for a in 0..6 {
            for b in 0..6 {
                if rows[a] != usize::MAX && rows[b] != usize::MAX && f[a][b] != 0.0 {
                    triplets.push((rows[a], rows[b], s.coeff * f[a][b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Global system: metallic-wall edges eliminated, impedance terms on ports
/// and absorbing faces, and `b_j = 2iβ mⱼ` for each transmitting port.
pub fn assemble_system(
    mesh: &Mesh,
    dof_map: &EdgeDofMap,
    material: &MaterialField,
    params: &PhysicsParams,
    ports: &PortSet,
) -> Result<ComplexSparseSystem, FemError> {
    if !dof_map.matches(mesh) {
        return Err(FemError::DofMapMismatch(format!(
            "dof map built for {} tets, mesh has {}",
            dof_map.n_tets(),
            mesh.n_tets()
        )));
    }
    material.check(mesh)?;
    let n = dof_map.n_free();
    let all: Vec<usize> = (0..mesh.n_tets()).collect();
    let surfaces = impedance_surfaces(mesh, ports.beta);
    let matrix = assemble_operator(mesh, dof_map, material, params, &all, &surfaces, dof_map.free_index_table(), n);
    let mut rhs = Mat::<C64>::zeros(n, ports.len());
    let scale = C64::new(0.0, 2.0) * ports.beta;
    for (j, p) in ports.ports.iter().enumerate() {
        for &(d, m) in &p.load {
            rhs[(d, j)] = scale * m;
        }
    }
    Ok(ComplexSparseSystem { matrix, rhs, n })
}

/// `∫ δκ u·v` tested against every edge basis function, with `δκ` a P1 field
/// on imaging-region tets. Vectors are indexed by global edge.
pub fn mass_action(mesh: &Mesh, dof_map: &EdgeDofMap, dkappa: &[C64], u: &[C64]) -> Vec<C64> {
    let partial: Vec<Vec<(usize, C64)>> = (0..mesh.n_tets())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = Vec::new();
            for &t in chunk {
                let tet = &mesh.tets()[t];
                if tet.region != REGION_IMAGING {
                    continue;
                }
                let k = tet.nodes.map(|n| dkappa[n]);
                if k.iter().all(|v| v.norm() == 0.0) {
                    continue;
                }
                let m = TetElement::from_mesh(mesh, dof_map, t).mass(&k);
                let edges = dof_map.tet_edges(t);
                for a in 0..6 {
                    let s: C64 = (0..6).map(|b| m[a][b] * u[edges[b]]).sum();
                    out.push((edges[a], s));
                }
            }
            out
        })
        .collect();
    let mut y = vec![C64::new(0.0, 0.0); dof_map.n_edges()];
    for (e, v) in partial.into_iter().flatten() {
        y[e] += v;
    }
    y
}

/// `G_n = ∫_Ω₀ λ_n E·F` for every node, over imaging-region tets.
/// Vectors are indexed by global edge.
pub fn nodal_mass_gradient(mesh: &Mesh, dof_map: &EdgeDofMap, e: &[C64], f: &[C64]) -> Vec<C64> {
    let partial: Vec<Vec<(usize, C64)>> = (0..mesh.n_tets())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = Vec::new();
            for &t in chunk {
                let tet = &mesh.tets()[t];
                if tet.region != REGION_IMAGING {
                    continue;
                }
                let tensor = TetElement::from_mesh(mesh, dof_map, t).mass_tensor();
                let edges = dof_map.tet_edges(t);
                let ue = edges.map(|x| e[x]);
                let uf = edges.map(|x| f[x]);
                for (n, tn) in tensor.iter().enumerate() {
                    let mut s = C64::new(0.0, 0.0);
                    for a in 0..6 {
                        for b in 0..6 {
                            s += ue[a] * tn[a][b] * uf[b];
                        }
                    }
                    out.push((tet.nodes[n], s));
                }
            }
            out
        })
        .collect();
    let mut g = vec![C64::new(0.0, 0.0); mesh.n_nodes()];
    for (n, v) in partial.into_iter().flatten() {
        g[n] += v;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::dofs::LOCAL_EDGES;
    use crate::mesh::{unit_cube_mesh, BoundaryTri, Tet, TAG_ABSORBING};
    use crate::quadrature::{tet_degree5, tri_degree4};
    use crate::Vec3;

    fn one_tet(tags: [i32; 4]) -> Mesh {
        let nodes = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.1, 0.0),
            Vec3::new(0.2, 0.9, 0.1),
            Vec3::new(0.1, 0.2, 1.2),
        ];
        let faces = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
        let boundary = faces.iter().zip(tags).map(|(&f, tag)| BoundaryTri { nodes: f, tag }).collect();
        Mesh::new(nodes, vec![Tet { nodes: [0, 1, 2, 3], region: REGION_IMAGING }], boundary).unwrap()
    }

    #[test]
    fn all_metal_tet_is_empty() {
        let m = one_tet([0; 4]);
        let d = EdgeDofMap::build(&m);
        let p = PhysicsParams::default();
        let ports = PortSet { beta: C64::new(1.0, 0.0), ports: vec![] };
        let s = assemble_system(&m, &d, &MaterialField::uniform(&m, C64::new(1.0, 0.0)), &p, &ports).unwrap();
        assert_eq!(s.n, 0);
        assert_eq!(s.matrix.nnz(), 0);
    }

    #[test]
    fn one_tet_matches_dense_oracle() {
        // Oracle: reference-tet gradients pushed forward by J⁻ᵀ, integrands
        // evaluated pointwise and summed with the quadrature rules.
        let m = one_tet([0, 0, 0, TAG_ABSORBING]);
        let d = EdgeDofMap::build(&m);
        let beta = C64::new(3.0, 0.0);
        let params = PhysicsParams { frequency: 1e-3, ..Default::default() };
        let mat = MaterialField::uniform(&m, C64::new(0.0, 0.0));
        let all_rows: Vec<usize> = (0..6).collect();
        let a = assemble_operator(&m, &d, &mat, &params, &[0], &impedance_surfaces(&m, beta), &all_rows, 6);

        let p = m.tet_points(0);
        let jac = nalgebra::Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        let jinv_t = jac.try_inverse().unwrap().transpose();
        let ref_grads = [Vec3::new(-1.0, -1.0, -1.0), Vec3::x(), Vec3::y(), Vec3::z()];
        let grads: Vec<Vec3> = ref_grads.iter().map(|g| jinv_t * g).collect();
        let vol = jac.determinant().abs() / 6.0;
        let sign = |k: usize| {
            let [i, j] = LOCAL_EDGES[k];
            if i < j { 1.0 } else { -1.0 }
        };
        let w = |k: usize, l: &[f64; 4]| {
            let [i, j] = LOCAL_EDGES[k];
            sign(k) * (l[i] * grads[j] - l[j] * grads[i])
        };
        let curl = |k: usize| {
            let [i, j] = LOCAL_EDGES[k];
            2.0 * sign(k) * grads[i].cross(&grads[j])
        };
        let n = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
        let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        for r in 0..6 {
            for c in 0..6 {
                let mut k = 0.0;
                for (_, wq) in tet_degree5() {
                    k += wq * vol * curl(r).dot(&curl(c));
                }
                let mut s = 0.0;
                for (tb, wq) in tri_degree4() {
                    let l = [tb[0], tb[1], tb[2], 0.0];
                    s += wq * area * w(r, &l).cross(&n).dot(&w(c, &l).cross(&n));
                }
                let expected = k + C64::new(0.0, 1.0) * beta * s;
                let e = d.tet_edges(0);
                assert!((a.get(e[r], e[c]) - expected).norm() < 1e-12, "{r} {c}");
            }
        }
    }

    #[test]
    fn symmetric_with_lossy_material() {
        let m = unit_cube_mesh(3, TAG_ABSORBING);
        let d = EdgeDofMap::build(&m);
        let params = PhysicsParams { frequency: 2e8, ..Default::default() };
        let eps: Vec<C64> = (0..m.n_nodes()).map(|i| C64::new(10.0 + i as f64 * 0.3, -((i % 5) as f64))).collect();
        let ports = PortSet { beta: C64::new(2.0, -0.1), ports: vec![] };
        let s = assemble_system(&m, &d, &MaterialField { eps }, &params, &ports).unwrap();
        assert!(s.matrix.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn mass_action_and_gradient_agree() {
        // uᵀ M(δκ) f = Σ_n δκ_n G_n for any vectors.
        let m = unit_cube_mesh(2, TAG_ABSORBING);
        let d = EdgeDofMap::build(&m);
        let u: Vec<C64> = (0..d.n_edges()).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let f: Vec<C64> = (0..d.n_edges()).map(|i| C64::new((i as f64 * 1.7).cos(), 0.2)).collect();
        let dk: Vec<C64> = (0..m.n_nodes()).map(|i| C64::new(i as f64 * 0.1, -1.0)).collect();
        let mf = mass_action(&m, &d, &dk, &f);
        let lhs: C64 = u.iter().zip(&mf).map(|(a, b)| a * b).sum();
        let g = nodal_mass_gradient(&m, &d, &u, &f);
        let rhs: C64 = dk.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }
}
