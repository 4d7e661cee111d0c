//! Lowest-order Nédélec edge elements for the time-harmonic curl-curl equation
//!
//! ```text
//! ∇×∇×E − κ E = 0,   κ = ω² μ0 ε0 ε_r
//! ```
//!
//! with `E × n = 0` on metal and the first-order impedance condition
//! `(∇×E)×n + iβ n×(E×n) = g` on port and absorbing surfaces.

mod assembly;
mod dofs;
mod element;
mod interp;
mod port;

use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, REGION_FIXED};
use crate::C64;

pub use assembly::{
    assemble_operator, assemble_system, impedance_surfaces, mass_action, nodal_mass_gradient, ComplexSparseSystem,
    SurfaceTerm,
};
pub use dofs::{EdgeDofMap, LOCAL_EDGES};
pub use element::{FaceElement, TetElement};
pub use interp::{assemble_volume_source, circulations_of, evaluate_field, hcurl_error};
pub use port::{build_ports, te10_beta, te10_mode, PortExcitation, PortFrame, PortMode, PortSet};

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("frequency {frequency} Hz is below the TE10 cutoff {cutoff} Hz of a {width} m wide port")]
    BelowCutoff { frequency: f64, cutoff: f64, width: f64 },
    #[error("material field has {got} values for {expected} nodes")]
    MaterialSize { got: usize, expected: usize },
    #[error("material value at node {0} is not finite")]
    NonFiniteMaterial(usize),
    #[error("dof map does not match the mesh: {0}")]
    DofMapMismatch(String),
    #[error("{0} port frames supplied for {1} ports")]
    PortCount(usize, usize),
}

/// Frequency-domain physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Frequency (Hz).
    pub frequency: f64,
    /// Relative permittivity of the fixed (ceramic) region, which also loads the port waveguides.
    pub eps_ceramic: C64,
    /// Port broad-side width `a` (m).
    pub port_width: f64,
    /// Port narrow-side height `b` (m).
    pub port_height: f64,
    /// Incident TE10 amplitude `E0` (V/m).
    pub amplitude: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            frequency: 1.0e9,
            eps_ceramic: C64::new(59.0, 0.0),
            port_width: 0.024,
            port_height: 0.012,
            amplitude: 1.0,
        }
    }
}

impl PhysicsParams {
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    /// `ω² μ0 ε0`, the factor turning a relative permittivity into `κ`.
    pub fn k0_sq(&self) -> f64 {
        let w = self.omega();
        w * w * MU0 * EPS0
    }

    /// Local wavenumber `ω √(μ0 ε_r ε0)`, principal branch.
    pub fn wavenumber(&self, eps_r: C64) -> C64 {
        (self.k0_sq() * eps_r).sqrt()
    }

    pub fn kappa(&self, eps_r: C64) -> C64 {
        self.k0_sq() * eps_r
    }
}

/// Nodal (P1) relative permittivity.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub eps: Vec<C64>,
}

impl MaterialField {
    pub fn uniform(mesh: &Mesh, eps: C64) -> Self {
        Self { eps: vec![eps; mesh.n_nodes()] }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<(), FemError> {
        if self.eps.len() != mesh.n_nodes() {
            return Err(FemError::MaterialSize { got: self.eps.len(), expected: mesh.n_nodes() });
        }
        if let Some(n) = self.eps.iter().position(|e| !e.is_finite()) {
            return Err(FemError::NonFiniteMaterial(n));
        }
        Ok(())
    }

    /// Nodal `κ` seen by tet `t`; fixed-region tets use the ceramic value.
    pub fn tet_kappa(&self, mesh: &Mesh, t: usize, params: &PhysicsParams) -> [C64; 4] {
        let tet = &mesh.tets()[t];
        if tet.region == REGION_FIXED {
            [params.kappa(params.eps_ceramic); 4]
        } else {
            tet.nodes.map(|n| params.kappa(self.eps[n]))
        }
    }

    /// Relative permittivity at barycentric coordinates `bary` of tet `t`.
    pub fn eps_at(&self, mesh: &Mesh, t: usize, bary: &[f64], params: &PhysicsParams) -> C64 {
        let tet = &mesh.tets()[t];
        if tet.region == REGION_FIXED {
            params.eps_ceramic
        } else {
            tet.nodes.iter().zip(bary).map(|(&n, &l)| self.eps[n] * l).sum()
        }
    }
}
