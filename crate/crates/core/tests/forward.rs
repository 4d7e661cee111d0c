mod common;

use std::collections::HashSet;

use maxtomo::fem::{assemble_operator, impedance_surfaces, EdgeDofMap, MaterialField, PhysicsParams};
use maxtomo::inverse::{truncate_for_ring, ForwardProblem, SolverConfig};
use maxtomo::mesh::{generate_chamber_mesh, unit_cube_mesh, ChamberLayout, ChamberSpec, TAG_ABSORBING};
use maxtomo::phantom::EPS_GEL;
use maxtomo::C64;

#[test]
fn exact_preconditioner_converges_in_one_iteration() {
    let spec = common::small_chamber(0.01);
    let p = common::problem(&spec, SolverConfig { n_subdomains: 1, overlap: 1, ..Default::default() });
    let sol = p.forward(&MaterialField::uniform(&p.mesh, EPS_GEL), &(0..8).collect::<Vec<_>>()).unwrap();
    assert!(sol.stats.iterations.iter().all(|&k| k == 1), "{:?}", sol.stats.iterations);
    assert!(sol.stats.residuals.iter().all(|&r| r <= 1e-8));
}

#[test]
fn scattering_matrix_is_reciprocal() {
    let spec = common::small_chamber(0.01);
    let p = common::problem(&spec, SolverConfig { n_subdomains: 1, overlap: 1, tol: 1e-12, ..Default::default() });
    let material = common::material(&p, &common::stroke_phantom(&spec, [0.015, 0.0, 0.015], [0.015, 0.012, 0.01]));
    let s = p.forward(&material, &(0..8).collect::<Vec<_>>()).unwrap().smatrix;
    let n0 = p.ports.ports[0].norm_sq;
    for tx in 0..8 {
        for rx in 0..8 {
            let (a, b) = (s.get(rx, tx).unwrap() * p.ports.ports[rx].norm_sq, s.get(tx, rx).unwrap() * p.ports.ports[tx].norm_sq);
            assert!((a - b).norm() <= 1e-8 * n0, "S({rx},{tx})");
        }
    }
}

#[test]
fn port_loads_live_on_their_port() {
    let spec = common::small_chamber(0.01);
    let p = common::problem(&spec, SolverConfig { n_subdomains: 1, overlap: 1, ..Default::default() });
    let op = p.operator(&MaterialField::uniform(&p.mesh, EPS_GEL)).unwrap();
    for (j, port) in p.ports.ports.iter().enumerate() {
        let mut on_port = HashSet::new();
        for tri in p.mesh.port_triangles(port.tag) {
            for (a, b) in [(0, 1), (1, 2), (0, 2)] {
                let (u, v) = (tri.nodes[a].min(tri.nodes[b]), tri.nodes[a].max(tri.nodes[b]));
                let e = p.dof_map.edges().iter().position(|&x| x == [u, v]).unwrap();
                if let Some(d) = p.dof_map.free_index(e) {
                    on_port.insert(d);
                }
            }
        }
        for d in 0..p.n_dofs() {
            if !on_port.contains(&d) {
                assert_eq!(op.system.rhs[(d, j)], C64::new(0.0, 0.0));
            }
        }
        assert!(on_port.iter().any(|&d| op.system.rhs[(d, j)].norm() > 0.0));
    }
}

#[test]
fn lossy_system_is_nonsingular() {
    let mesh = unit_cube_mesh(1, TAG_ABSORBING);
    let dofs = EdgeDofMap::build(&mesh);
    let params = PhysicsParams { frequency: 1e8, ..Default::default() };
    let material = MaterialField::uniform(&mesh, C64::new(4.0, -2.0));
    let all: Vec<usize> = (0..mesh.n_tets()).collect();
    let a = assemble_operator(&mesh, &dofs, &material, &params, &all, &impedance_surfaces(&mesh, C64::new(2.0, 0.0)), dofs.free_index_table(), dofs.n_free());
    let dense = a.to_dense();
    let m = faer::Mat::from_fn(dense.len(), dense.len(), |i, j| dense[i][j]);
    let sv = m.singular_values().unwrap();
    let (max, min) = (sv.iter().cloned().fold(0.0, f64::max), sv.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!(min > 1e-6 * max, "smallest singular value {min:e} of {max:e}");
}

#[test]
fn truncated_ring_problem_solves() {
    let spec = ChamberSpec { radius: 0.04, height: 0.075, n_rings: 3, antennas_per_ring: 4, port_width: 0.02, port_height: 0.01, mesh_size: 0.01 };
    let layout = ChamberLayout::new(&spec);
    let mesh = generate_chamber_mesh(&spec).unwrap();
    let sub = truncate_for_ring(&mesh, &layout, 1).unwrap();
    let frames: Vec<_> = sub.ports.iter().map(|&p| layout.port_frame(p + 1)).collect();
    let p = ForwardProblem::new(sub.mesh.clone(), &frames, PhysicsParams { port_width: 0.02, port_height: 0.01, ..Default::default() }, SolverConfig { n_subdomains: 2, ..Default::default() }).unwrap();
    let sol = p.forward(&MaterialField::uniform(&p.mesh, EPS_GEL), &sub.transmitters).unwrap();
    assert!(sol.stats.all_converged());
    assert_eq!(sol.smatrix.transmitters(), sub.transmitters);
    assert_eq!(sol.smatrix.entries().count(), 4 * 12);
}
