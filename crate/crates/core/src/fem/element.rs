//! Element integrals of the lowest-order Nédélec basis
//! `wᵉ = λ_i ∇λ_j − λ_j ∇λ_i`, `∇×wᵉ = 2 ∇λ_i × ∇λ_j`.

use nalgebra::Matrix3;

use super::dofs::{EdgeDofMap, LOCAL_EDGES};
use crate::mesh::{Mesh, TET_FACES};
use crate::{Vec3, C64};

/// `∫_T λ_p λ_q λ_r / |T|` from the multiplicities of the indices.
fn cubic_moment(p: usize, q: usize, r: usize) -> f64 {
    match (p == q, q == r, p == r) {
        (true, true, _) => 6.0 / 120.0,
        (false, false, false) => 1.0 / 120.0,
        _ => 2.0 / 120.0,
    }
}

/// Geometry of one tet together with the global orientation of its edges.
#[derive(Clone, Debug)]
pub struct TetElement {
    pub points: [Vec3; 4],
    pub grads: [Vec3; 4],
    pub volume: f64,
    pub signs: [f64; 6],
}

impl TetElement {
    pub fn new(points: [Vec3; 4], signs: [f64; 6]) -> Self {
        let j = Matrix3::from_columns(&[points[1] - points[0], points[2] - points[0], points[3] - points[0]]);
        let volume = j.determinant() / 6.0;
        let inv = j.try_inverse().expect("non-degenerate tet");
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        let g0 = -(g1 + g2 + g3);
        Self { points, grads: [g0, g1, g2, g3], volume: volume.abs(), signs }
    }

    pub fn from_mesh(mesh: &Mesh, dof_map: &EdgeDofMap, t: usize) -> Self {
        Self::new(mesh.tet_points(t), *dof_map.tet_signs(t))
    }

    pub fn point(&self, bary: &[f64; 4]) -> Vec3 {
        self.points.iter().zip(bary).map(|(p, &l)| p * l).sum()
    }

    /// Signed basis functions at barycentric coordinates `bary`.
    pub fn basis(&self, bary: &[f64; 4]) -> [Vec3; 6] {
        std::array::from_fn(|k| {
            let [i, j] = LOCAL_EDGES[k];
            self.signs[k] * (bary[i] * self.grads[j] - bary[j] * self.grads[i])
        })
    }

    /// Signed (constant) curls of the basis functions.
    pub fn curls(&self) -> [Vec3; 6] {
        std::array::from_fn(|k| {
            let [i, j] = LOCAL_EDGES[k];
            2.0 * self.signs[k] * self.grads[i].cross(&self.grads[j])
        })
    }

    /// `∫_T ∇×wᵃ · ∇×wᵇ`.
    pub fn stiffness(&self) -> [[f64; 6]; 6] {
        let c = self.curls();
        std::array::from_fn(|a| std::array::from_fn(|b| self.volume * c[a].dot(&c[b])))
    }

    /// `T[n][a][b] = ∫_T λ_n wᵃ · wᵇ`, integrated in closed form.
    pub fn mass_tensor(&self) -> [[[f64; 6]; 6]; 4] {
        let g: [[f64; 4]; 4] = std::array::from_fn(|p| std::array::from_fn(|q| self.grads[p].dot(&self.grads[q])));
        let mut t = [[[0.0; 6]; 6]; 4];
        for (a, &[i, j]) in LOCAL_EDGES.iter().enumerate() {
            for (b, &[k, l]) in LOCAL_EDGES.iter().enumerate().skip(a) {
                let s = self.signs[a] * self.signs[b] * self.volume;
                for (n, tn) in t.iter_mut().enumerate() {
                    let v = cubic_moment(i, k, n) * g[j][l] - cubic_moment(i, l, n) * g[j][k]
                        - cubic_moment(j, k, n) * g[i][l]
                        + cubic_moment(j, l, n) * g[i][k];
                    tn[a][b] = s * v;
                    tn[b][a] = s * v;
                }
            }
        }
        t
    }

    /// `∫_T κ wᵃ · wᵇ` for a P1 coefficient with nodal values `kappa`.
    pub fn mass(&self, kappa: &[C64; 4]) -> [[C64; 6]; 6] {
        let t = self.mass_tensor();
        std::array::from_fn(|a| std::array::from_fn(|b| (0..4).map(|n| kappa[n] * t[n][a][b]).sum()))
    }

    /// Area and unit normal (orientation unspecified) of the face opposite local vertex `opposite`.
    pub fn face_geometry(&self, opposite: usize) -> (f64, Vec3) {
        let [p, q, r] = TET_FACES[opposite].map(|k| self.points[k]);
        let c = (q - p).cross(&(r - p));
        (0.5 * c.norm(), c.normalize())
    }

    /// `∫_F (wᵃ×n)·(wᵇ×n)` over the face opposite local vertex `opposite`.
    /// Only the three face edges give nonzero entries.
    pub fn face_mass(&self, opposite: usize) -> [[f64; 6]; 6] {
        let (area, n) = self.face_geometry(opposite);
        let proj = Matrix3::identity() - n * n.transpose();
        let gt: [Vec3; 4] = std::array::from_fn(|p| proj * self.grads[p]);
        let moment = |p: usize, q: usize| {
            if p == opposite || q == opposite {
                0.0
            } else if p == q {
                area / 6.0
            } else {
                area / 12.0
            }
        };
        let mut m = [[0.0; 6]; 6];
        for (a, &[i, j]) in LOCAL_EDGES.iter().enumerate() {
            for (b, &[k, l]) in LOCAL_EDGES.iter().enumerate() {
                let v = moment(i, k) * gt[j].dot(&gt[l]) - moment(i, l) * gt[j].dot(&gt[k])
                    - moment(j, k) * gt[i].dot(&gt[l])
                    + moment(j, l) * gt[i].dot(&gt[k]);
                m[a][b] = self.signs[a] * self.signs[b] * v;
            }
        }
        m
    }

    /// `∫_F f · wᵃ` over the face opposite `opposite`, degree-4 triangle rule.
    pub fn face_load(&self, opposite: usize, f: impl Fn(&Vec3) -> Vec3) -> [f64; 6] {
        let (area, _) = self.face_geometry(opposite);
        let face = TET_FACES[opposite];
        let mut out = [0.0; 6];
        for (tb, w) in crate::quadrature::tri_degree4() {
            let mut bary = [0.0; 4];
            for (k, &v) in face.iter().enumerate() {
                bary[v] = tb[k];
            }
            let fx = f(&self.point(&bary));
            for (o, wb) in out.iter_mut().zip(self.basis(&bary)) {
                *o += w * area * fx.dot(&wb);
            }
        }
        out
    }
}

/// Geometry of a boundary triangle for surface quadrature.
#[derive(Clone, Debug)]
pub struct FaceElement {
    pub points: [Vec3; 3],
    pub area: f64,
}

impl FaceElement {
    pub fn new(points: [Vec3; 3]) -> Self {
        let area = 0.5 * (points[1] - points[0]).cross(&(points[2] - points[0])).norm();
        Self { points, area }
    }

    /// `∫_F f` with the degree-4 triangle rule.
    pub fn integrate(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        crate::quadrature::tri_degree4()
            .iter()
            .map(|(b, w)| {
                let x = self.points[0] * b[0] + self.points[1] * b[1] + self.points[2] * b[2];
                w * f(&x)
            })
            .sum::<f64>()
            * self.area
    }
}
