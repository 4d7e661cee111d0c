mod common;

use maxtomo::fem::MaterialField;
use maxtomo::inverse::{InverseConfig, SolverConfig, Tomography};
use maxtomo::phantom::EPS_GEL;
use maxtomo::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let spec = common::small_chamber(0.008);
    let solver = SolverConfig { n_subdomains: 2, overlap: 1, tol: 1e-12, ..Default::default() };
    let p = common::problem(&spec, solver);
    let truth = common::material(&p, &common::stroke_phantom(&spec, [0.015, 0.0, 0.015], [0.015, 0.012, 0.01]));
    let all: Vec<usize> = (0..8).collect();
    let measured = p.forward(&truth, &all).unwrap().smatrix;
    let empty = p.forward(&MaterialField::uniform(&p.mesh, EPS_GEL), &all).unwrap().smatrix;
    let mid = MaterialField { eps: truth.eps.iter().map(|&e| 0.5 * (e + EPS_GEL)).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for alpha in [0.0, 1e-6] {
        let config = InverseConfig { alpha, ..Default::default() };
        let tomo = Tomography::new(&p, &measured, Some(&empty), &config, mid.clone()).unwrap();
        let (eval, g) = tomo.cost_and_gradient(&mid).unwrap();
        for dir in 0..3 {
            let delta: Vec<C64> = (0..p.mesh.n_nodes()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let gd: f64 = g.iter().zip(&delta).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
            let dj_lin = tomo.directional_derivative_linearized(&eval, &delta).unwrap();
            let mut best = f64::INFINITY;
            for k in 2..=5 {
                let h = 10f64.powi(-k);
                let plus = MaterialField { eps: mid.eps.iter().zip(&delta).map(|(e, d)| e + h * d).collect() };
                let minus = MaterialField { eps: mid.eps.iter().zip(&delta).map(|(e, d)| e - h * d).collect() };
                let fd = (tomo.evaluate(&plus).unwrap().cost - tomo.evaluate(&minus).unwrap().cost) / (2.0 * h);
                best = best.min((fd - gd).abs() / gd.abs());
            }
            assert!(best <= 1e-3, "direction {dir}: best finite-difference error {best:e}");
            assert!((dj_lin - gd).abs() <= 1e-6 * gd.abs(), "direction {dir}: linearized {dj_lin:e} vs adjoint {gd:e}");
        }
    }
}
