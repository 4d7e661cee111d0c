#![allow(dead_code)]

use maxtomo::fem::{MaterialField, PhysicsParams};
use maxtomo::inverse::{ForwardProblem, SolverConfig};
use maxtomo::mesh::{generate_chamber_mesh, ChamberLayout, ChamberSpec};
use maxtomo::phantom::{build_phantom, Ellipsoid, PhantomSpec, Stroke, StrokeRule, EPS_BLOOD, EPS_GEL};

pub fn small_chamber(mesh_size: f64) -> ChamberSpec {
    ChamberSpec {
        radius: 0.05,
        height: 0.03,
        n_rings: 1,
        antennas_per_ring: 8,
        port_width: 0.024,
        port_height: 0.012,
        mesh_size,
    }
}

pub fn problem(spec: &ChamberSpec, solver: SolverConfig) -> ForwardProblem {
    let mesh = generate_chamber_mesh(spec).unwrap();
    let layout = ChamberLayout::new(spec);
    ForwardProblem::new(mesh, &layout.port_frames(), PhysicsParams::default(), solver).unwrap()
}

pub fn stroke_phantom(spec: &ChamberSpec, center: [f64; 3], semi_axes: [f64; 3]) -> PhantomSpec {
    let _ = spec;
    PhantomSpec {
        background: EPS_GEL,
        head: None,
        stroke: Some(Stroke {
            shape: Ellipsoid { center, semi_axes, euler: [0.0; 3] },
            rule: StrokeRule::MeanWithBlood(EPS_BLOOD),
        }),
    }
}

pub fn material(problem: &ForwardProblem, spec: &PhantomSpec) -> MaterialField {
    build_phantom(spec, &problem.mesh).unwrap()
}
