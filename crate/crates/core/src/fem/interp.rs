//! Interpolation into the edge space, field evaluation and error norms.

use rayon::prelude::*;

use super::dofs::EdgeDofMap;
use super::element::TetElement;
use crate::mesh::Mesh;
use crate::quadrature::{line_gauss2, tet_degree5};
use crate::{cdot_real, complexify, CVec3, Vec3, C64};

/// Edge circulations `c_e = (1/|e|) ∫_e F·t_e`, where `t_e` is the edge
/// vector (length `|e|`, low → high node), by 2-point Gauss per edge.
pub fn circulations_of(mesh: &Mesh, dof_map: &EdgeDofMap, field: impl Fn(&Vec3) -> CVec3 + Sync) -> Vec<C64> {
    let rule = line_gauss2();
    dof_map
        .edges()
        .par_iter()
        .map(|&[a, b]| {
            let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
            let t = q - p;
            rule.iter().map(|&(s, w)| w * cdot_real(&field(&(p + s * t)), &t)).sum()
        })
        .collect()
}

/// FE field and its curl at barycentric point `bary` of tet `t`, from
/// coefficients indexed by global edge.
pub fn evaluate_field(elem: &TetElement, dof_map: &EdgeDofMap, t: usize, u: &[C64], bary: &[f64; 4]) -> (CVec3, CVec3) {
    let edges = dof_map.tet_edges(t);
    let w = elem.basis(bary);
    let c = elem.curls();
    let mut e = CVec3::zeros();
    let mut curl = CVec3::zeros();
    for k in 0..6 {
        e += complexify(&w[k]) * u[edges[k]];
        curl += complexify(&c[k]) * u[edges[k]];
    }
    (e, curl)
}

/// `(‖E_h − E‖_L2, ‖∇×E_h − ∇×E‖_L2)` with degree-5 volume quadrature.
pub fn hcurl_error(
    mesh: &Mesh,
    dof_map: &EdgeDofMap,
    u: &[C64],
    field: impl Fn(&Vec3) -> CVec3 + Sync,
    curl_field: impl Fn(&Vec3) -> CVec3 + Sync,
) -> (f64, f64) {
    let (l2, hc) = (0..mesh.n_tets())
        .into_par_iter()
        .map(|t| {
            let elem = TetElement::from_mesh(mesh, dof_map, t);
            let mut s = (0.0, 0.0);
            for (b, w) in tet_degree5() {
                let x = elem.point(b);
                let (eh, ch) = evaluate_field(&elem, dof_map, t, u, b);
                s.0 += w * elem.volume * (eh - field(&x)).norm_squared();
                s.1 += w * elem.volume * (ch - curl_field(&x)).norm_squared();
            }
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (l2.sqrt(), hc.sqrt())
}

/// Load vector `∫ J·wᵉ` per global edge, degree-5 volume quadrature.
pub fn assemble_volume_source(mesh: &Mesh, dof_map: &EdgeDofMap, source: impl Fn(&Vec3) -> CVec3 + Sync) -> Vec<C64> {
    let local: Vec<[C64; 6]> = (0..mesh.n_tets())
        .into_par_iter()
        .map(|t| {
            let elem = TetElement::from_mesh(mesh, dof_map, t);
            let mut out = [C64::new(0.0, 0.0); 6];
            for (b, w) in tet_degree5() {
                let j = source(&elem.point(b));
                for (o, wb) in out.iter_mut().zip(elem.basis(b)) {
                    *o += w * elem.volume * cdot_real(&j, &wb);
                }
            }
            out
        })
        .collect();
    let mut rhs = vec![C64::new(0.0, 0.0); dof_map.n_edges()];
    for (t, l) in local.iter().enumerate() {
        for (k, &e) in dof_map.tet_edges(t).iter().enumerate() {
            rhs[e] += l[k];
        }
    }
    rhs
}
