//! TE10 port modes and their discrete excitation data.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::dofs::EdgeDofMap;
use super::element::{FaceElement, TetElement};
use super::{FemError, PhysicsParams, EPS0, MU0};
use crate::mesh::Mesh;
use crate::quadrature::gauss_legendre;
use crate::{Vec3, C64};

/// Local coordinates of a rectangular port: `ξ ∈ [0, a]` across the broad
/// side and the field direction `η̂` along the narrow side.
#[derive(Clone, Debug, PartialEq)]
pub enum PortFrame {
    /// Flat port centred at `center` with broad-side axis `u` and field axis `v`.
    Planar { center: Vec3, u: Vec3, v: Vec3, a: f64, b: f64 },
    /// Curved port on the lateral wall of a cylinder around the z axis,
    /// centred at azimuth `phi` and height `z`; `η̂ = ẑ`.
    Cylindrical { radius: f64, phi: f64, z: f64, a: f64, b: f64 },
}

impl PortFrame {
    pub fn width(&self) -> f64 {
        match *self {
            PortFrame::Planar { a, .. } | PortFrame::Cylindrical { a, .. } => a,
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            PortFrame::Planar { b, .. } | PortFrame::Cylindrical { b, .. } => b,
        }
    }

    /// Broad-side coordinate of `x`.
    pub fn xi(&self, x: &Vec3) -> f64 {
        match self {
            PortFrame::Planar { center, u, a, .. } => (x - center).dot(u) + 0.5 * a,
            PortFrame::Cylindrical { radius, phi, a, .. } => {
                let d = x.y.atan2(x.x) - phi;
                let wrapped = d - (2.0 * PI) * ((d + PI) / (2.0 * PI)).floor();
                radius * wrapped + 0.5 * a
            }
        }
    }

    pub fn field_direction(&self) -> Vec3 {
        match self {
            PortFrame::Planar { v, .. } => *v,
            PortFrame::Cylindrical { .. } => Vec3::z(),
        }
    }

    /// Fit a planar frame to the triangles tagged `tag`: the centre is the
    /// area-weighted centroid, `v` the direction of least spread in the port
    /// plane and `u` the broad-side direction.
    pub fn fit_planar(mesh: &Mesh, tag: usize, a: f64, b: f64) -> Self {
        let mut area = 0.0;
        let mut center = Vec3::zeros();
        let mut normal = Vec3::zeros();
        let tris: Vec<_> = mesh.port_triangles(tag).collect();
        for t in &tris {
            let p = t.nodes.map(|n| mesh.nodes()[n]);
            let c = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let s = 0.5 * c.norm();
            area += s;
            center += s * (p[0] + p[1] + p[2]) / 3.0;
            normal += if normal.dot(&c) < 0.0 { -c } else { c };
        }
        center /= area;
        let n = normal.normalize();
        let mut cov = nalgebra::Matrix3::<f64>::zeros();
        for t in &tris {
            for &v in &t.nodes {
                let d = mesh.nodes()[v] - center;
                let d = d - n * n.dot(&d);
                cov += d * d.transpose();
            }
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let u: Vec3 = eig.eigenvectors.column(order[0]).into();
        let v = n.cross(&u).normalize();
        PortFrame::Planar { center, u, v, a, b }
    }
}

/// Analytic TE10 transverse field `E⁰ = E0 sin(πξ/a) η̂` of one port.
#[derive(Clone, Debug, PartialEq)]
pub struct PortMode {
    pub frame: PortFrame,
    pub amplitude: f64,
}

impl PortMode {
    pub fn field(&self, x: &Vec3) -> Vec3 {
        let a = self.frame.width();
        let xi = self.frame.xi(x);
        if !(0.0..=a).contains(&xi) {
            return Vec3::zeros();
        }
        self.amplitude * (PI * xi / a).sin() * self.frame.field_direction()
    }

    /// `∫|E⁰|²` over the exact `a × b` rectangle.
    pub fn analytic_norm_sq(&self) -> f64 {
        self.amplitude * self.amplitude * self.frame.width() * self.frame.height() / 2.0
    }

    /// Same integral by tensor Gauss-Legendre quadrature in `(ξ, η)`.
    pub fn rectangle_norm_sq(&self) -> f64 {
        let (a, b) = (self.frame.width(), self.frame.height());
        let rule = gauss_legendre(12);
        let mut s = 0.0;
        for &(x, wx) in &rule {
            for &(_, wy) in &rule {
                let v = self.amplitude * (PI * x).sin();
                s += wx * wy * v * v;
            }
        }
        s * a * b
    }
}

/// Check the TE10 cutoff and return `(mode, β)` with
/// `β = √(ω²μ0ε0 ε_cer − (π/a)²)` on the principal branch.
pub fn te10_mode(frame: &PortFrame, params: &PhysicsParams) -> Result<(PortMode, C64), FemError> {
    let beta = te10_beta(frame.width(), params)?;
    Ok((PortMode { frame: frame.clone(), amplitude: params.amplitude }, beta))
}

/// TE10 propagation constant of a ceramic-loaded guide of width `a`.
pub fn te10_beta(a: f64, params: &PhysicsParams) -> Result<C64, FemError> {
    let cut = (PI / a).powi(2);
    if params.k0_sq() * params.eps_ceramic.re <= cut {
        let c = 1.0 / (MU0 * EPS0).sqrt();
        return Err(FemError::BelowCutoff {
            frequency: params.frequency,
            cutoff: c / (2.0 * a * params.eps_ceramic.re.max(0.0).sqrt()),
            width: a,
        });
    }
    Ok((params.kappa(params.eps_ceramic) - cut).sqrt())
}

/// Discrete data of one port.
#[derive(Clone, Debug)]
pub struct PortExcitation {
    pub tag: usize,
    pub mode: PortMode,
    /// `mᵢ[e] = ∫_Γᵢ E⁰ · wᵉ` on unconstrained DoFs, sorted by DoF.
    pub load: Vec<(usize, f64)>,
    /// `∫_Γᵢ |E⁰|²` over the mesh triangles of the port.
    pub norm_sq: f64,
}

impl PortExcitation {
    /// `mᵢᵀ u`.
    pub fn project(&self, u: &[C64]) -> C64 {
        self.load.iter().map(|&(d, m)| u[d] * m).sum()
    }
}

#[derive(Clone, Debug)]
pub struct PortSet {
    pub beta: C64,
    pub ports: Vec<PortExcitation>,
}

impl PortSet {
    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }
}

/// Mode loads and norms for every port; `frames[i]` belongs to port tag `i + 1`.
pub fn build_ports(
    mesh: &Mesh,
    dof_map: &EdgeDofMap,
    frames: &[PortFrame],
    params: &PhysicsParams,
) -> Result<PortSet, FemError> {
    if frames.len() != mesh.n_ports() {
        return Err(FemError::PortCount(frames.len(), mesh.n_ports()));
    }
    let owners = mesh.boundary_owners();
    let beta = te10_beta(params.port_width, params)?;
    let mut ports = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let tag = i + 1;
        let (mode, _) = te10_mode(frame, params)?;
        let mut load = BTreeMap::new();
        let mut norm_sq = 0.0;
        for (bi, tri) in mesh.boundary().iter().enumerate() {
            if tri.tag != tag as i32 {
                continue;
            }
            let (t, opp) = owners[bi];
            let elem = TetElement::from_mesh(mesh, dof_map, t);
            let local = elem.face_load(opp, |x| mode.field(x));
            for (k, &e) in dof_map.tet_edges(t).iter().enumerate() {
                if local[k] != 0.0 {
                    if let Some(d) = dof_map.free_index(e) {
                        *load.entry(d).or_insert(0.0) += local[k];
                    }
                }
            }
            let face = FaceElement::new(tri.nodes.map(|n| mesh.nodes()[n]));
            norm_sq += face.integrate(|x| mode.field(x).norm_squared());
        }
        ports.push(PortExcitation { tag, mode, load: load.into_iter().collect(), norm_sq });
    }
    Ok(PortSet { beta, ports })
}
