use proptest::prelude::*;

use maxtomo::fem::{
    assemble_operator, impedance_surfaces, EdgeDofMap, MaterialField, PhysicsParams, TetElement, LOCAL_EDGES,
};
use maxtomo::inverse::{history_csv, minimize, LbfgsOptions, Objective};
use maxtomo::mesh::{build_partition_of_unity, grow_overlap, partition, unit_cube_mesh, PartitionStrategy, TAG_ABSORBING};
use maxtomo::phantom::add_noise;
use maxtomo::quadrature::line_gauss2;
use maxtomo::scattering::{normalize_row, Provenance, ScatteringMatrix};
use maxtomo::{Vec3, C64};

fn point() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn complex() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn smatrix(n: usize, values: &[C64]) -> ScatteringMatrix {
    let mut s = ScatteringMatrix::empty(n, Provenance::Simulated, 1e9);
    for tx in 0..n {
        for rx in 0..n {
            s.set(rx, tx, values[tx * n + rx]);
        }
    }
    s
}

struct Quadratic(Vec<f64>);

impl Objective for Quadratic {
    type Error = ();

    fn dim(&self) -> usize {
        self.0.len()
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), ()> {
        let g: Vec<f64> = x.iter().zip(&self.0).enumerate().map(|(i, (x, t))| (i + 1) as f64 * (x - t)).collect();
        let f = x.iter().zip(&self.0).enumerate().map(|(i, (x, t))| 0.5 * (i + 1) as f64 * (x - t).powi(2)).sum();
        Ok((f, g))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_of_unity_sums_to_one(parts in 1usize..7, delta in 1usize..3, greedy in any::<bool>()) {
        let mesh = unit_cube_mesh(3, TAG_ABSORBING);
        let dofs = EdgeDofMap::build(&mesh);
        let strategy = if greedy { PartitionStrategy::GreedyGraph } else { PartitionStrategy::CoordinateBisection };
        let assignment = partition(&mesh, parts, strategy).unwrap();
        let mut d = grow_overlap(&mesh, &assignment, delta).unwrap();
        build_partition_of_unity(&mut d, &mesh, &dofs).unwrap();
        let mut sum = vec![0.0; dofs.n_free()];
        for s in &d.subdomains {
            for (&g, &w) in s.dofs.iter().zip(&s.weights) {
                prop_assert!((0.0..=1.0).contains(&w));
                sum[g] += w;
            }
        }
        for v in sum {
            prop_assert!((v - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn circulations_of_basis_are_kronecker(p in prop::array::uniform4(point())) {
        let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])).abs() / 6.0;
        prop_assume!(vol > 1e-3);
        let e = TetElement::new(p, [1.0; 6]);
        for (a, &[i, j]) in LOCAL_EDGES.iter().enumerate() {
            for b in 0..6 {
                let c: f64 = line_gauss2().iter().map(|&(s, w)| {
                    let mut bary = [0.0; 4];
                    bary[i] = 1.0 - s;
                    bary[j] = s;
                    w * e.basis(&bary)[b].dot(&(p[j] - p[i]))
                }).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((c - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn assembled_operator_is_symmetric(eps in prop::collection::vec(complex(), 27), beta in complex()) {
        let mesh = unit_cube_mesh(2, TAG_ABSORBING);
        let dofs = EdgeDofMap::build(&mesh);
        let material = MaterialField { eps: eps.iter().map(|e| e + C64::new(3.0, -1.0)).collect() };
        let all: Vec<usize> = (0..mesh.n_tets()).collect();
        let surfaces = impedance_surfaces(&mesh, beta);
        let a = assemble_operator(&mesh, &dofs, &material, &PhysicsParams::default(), &all, &surfaces, dofs.free_index_table(), dofs.n_free());
        prop_assert!(a.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn noise_is_seeded_and_zero_level_is_identity(values in prop::collection::vec(complex(), 9), seed in any::<u64>()) {
        let s = smatrix(3, &values);
        prop_assert_eq!(add_noise(&s, 0.0, seed).entries().collect::<Vec<_>>(), s.entries().collect::<Vec<_>>());
        prop_assert_eq!(add_noise(&s, 0.1, seed), add_noise(&s, 0.1, seed));
    }

    #[test]
    fn smatrix_csv_round_trip(values in prop::collection::vec(complex(), 16)) {
        let s = smatrix(4, &values);
        let back = ScatteringMatrix::from_csv(&s.to_csv(), 4, Provenance::Simulated, 1e9).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn normalization_ignores_row_scaling(values in prop::collection::vec(complex(), 16), c in complex(), tx in 0usize..4) {
        let s = smatrix(4, &values);
        prop_assume!(s.get(2, tx).unwrap().norm() > 1e-3 && c.norm() > 1e-3);
        let mut scaled = s.clone();
        for rx in 0..4 {
            scaled.set(rx, tx, s.get(rx, tx).unwrap() * c);
        }
        let (a, b) = (normalize_row(&s, tx, 2).unwrap(), normalize_row(&scaled, tx, 2).unwrap());
        prop_assert_eq!(a[2], Some(C64::new(1.0, 0.0)));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.unwrap() - y.unwrap()).norm() <= 1e-9 * (1.0 + x.unwrap().norm()));
        }
    }

    #[test]
    fn lbfgs_history_is_monotone(target in prop::collection::vec(-5.0..5.0f64, 1..8)) {
        let n = target.len();
        let r = minimize(&mut Quadratic(target), vec![0.0; n], &LbfgsOptions { max_iter: 30, ..Default::default() }, |_, _| {}).unwrap();
        for w in r.history.windows(2) {
            prop_assert!(w[1].cost <= w[0].cost);
        }
        prop_assert_eq!(history_csv(&r.history).lines().count(), r.history.len() + 1);
    }
}
