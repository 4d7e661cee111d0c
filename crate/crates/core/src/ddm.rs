//! Overlapping Schwarz preconditioners
//!
//! ```text
//! M⁻¹ = Σ_i R_iᵀ D_i B_i⁻¹ R_i
//! ```
//!
//! with `B_i = R_i A R_iᵀ` (RAS) or the subdomain re-assembly of the Maxwell
//! operator with an impedance condition `ik ∫(E×n)·(v×n)` on the artificial
//! interface (ORAS).

use std::collections::HashMap;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{assemble_operator, EdgeDofMap, MaterialField, PhysicsParams, SurfaceTerm};
use crate::krylov::LinearOperator;
use crate::mesh::{face_key, Mesh, OverlapDecomposition, TAG_METAL, TET_FACES};
use crate::sparse::{CsrMatrix, SparseError, SparseLu};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum DdmError {
    #[error("local factorization of subdomain {subdomain} failed: {source}")]
    Factorization { subdomain: usize, source: SparseError },
    #[error("decomposition is not usable: {0}")]
    Decomposition(String),
    #[error("vector length {got} does not match preconditioner size {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchwarzVariant {
    Oras,
    Ras,
}

#[derive(Debug)]
pub struct LocalProblem {
    /// Restriction `R_i` as sorted global DoF indices.
    pub dofs: Vec<usize>,
    /// Diagonal of `D_i`.
    pub weights: Vec<f64>,
    pub matrix: CsrMatrix,
    pub lu: SparseLu,
}

#[derive(Debug)]
pub struct OrasPreconditioner {
    pub n: usize,
    pub variant: SchwarzVariant,
    pub locals: Vec<LocalProblem>,
}

/// Impedance faces of the subdomain made of `tets`: physical port and
/// absorbing faces with `iβ`, then artificial interface faces with `ik`.
fn local_surfaces(
    mesh: &Mesh,
    material: &MaterialField,
    params: &PhysicsParams,
    beta: C64,
    tets: &[usize],
    boundary_index: &HashMap<[usize; 3], usize>,
) -> Vec<SurfaceTerm> {
    let mut count: HashMap<[usize; 3], (u32, usize, usize)> = HashMap::new();
    for &t in tets {
        for (k, f) in TET_FACES.iter().enumerate() {
            let key = face_key(f.map(|l| mesh.tets()[t].nodes[l]));
            count.entry(key).and_modify(|c| c.0 += 1).or_insert((1, t, k));
        }
    }
    let mut physical = Vec::new();
    let mut interface = Vec::new();
    for (key, (c, t, k)) in count {
        if c != 1 {
            continue;
        }
        match boundary_index.get(&key) {
            Some(&b) => {
                if mesh.boundary()[b].tag != TAG_METAL {
                    physical.push((b, SurfaceTerm { tet: t, opposite: k, coeff: C64::new(0.0, 1.0) * beta }));
                }
            }
            None => {
                let mut bary = [1.0 / 3.0; 4];
                bary[k] = 0.0;
                let eps = material.eps_at(mesh, t, &bary, params);
                let coeff = C64::new(0.0, 1.0) * params.wavenumber(eps);
                interface.push((key, SurfaceTerm { tet: t, opposite: k, coeff }));
            }
        }
    }
    physical.sort_by_key(|p| p.0);
    interface.sort_by_key(|p| p.0);
    physical.into_iter().map(|p| p.1).chain(interface.into_iter().map(|p| p.1)).collect()
}

/// Build and factorize the local matrices of every subdomain.
#[allow(clippy::too_many_arguments)]
pub fn assemble_local_matrices(
    mesh: &Mesh,
    decomp: &OverlapDecomposition,
    dof_map: &EdgeDofMap,
    material: &MaterialField,
    params: &PhysicsParams,
    global: &CsrMatrix,
    beta: C64,
    variant: SchwarzVariant,
) -> Result<OrasPreconditioner, DdmError> {
    if decomp.is_empty() {
        return Err(DdmError::Decomposition("no subdomains".into()));
    }
    if let Some(i) = decomp.subdomains.iter().position(|s| s.dofs.len() != s.weights.len() || s.tets.is_empty()) {
        return Err(DdmError::Decomposition(format!("subdomain {i} has no partition of unity")));
    }
    let boundary_index: HashMap<[usize; 3], usize> =
        mesh.boundary().iter().enumerate().map(|(i, b)| (face_key(b.nodes), i)).collect();
    let locals = decomp
        .subdomains
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let matrix = match variant {
                SchwarzVariant::Ras => global.principal_submatrix(&s.dofs),
                SchwarzVariant::Oras => {
                    let mut index = vec![usize::MAX; dof_map.n_edges()];
                    for (k, &d) in s.dofs.iter().enumerate() {
                        index[dof_map.free_edges()[d]] = k;
                    }
                    let surfaces = local_surfaces(mesh, material, params, beta, &s.tets, &boundary_index);
                    assemble_operator(mesh, dof_map, material, params, &s.tets, &surfaces, &index, s.dofs.len())
                }
            };
            let lu = matrix.factorize().map_err(|source| DdmError::Factorization { subdomain: i, source })?;
            Ok(LocalProblem { dofs: s.dofs.clone(), weights: s.weights.clone(), matrix, lu })
        })
        .collect::<Result<Vec<_>, DdmError>>()?;
    Ok(OrasPreconditioner { n: global.nrows(), variant, locals })
}

impl OrasPreconditioner {
    /// `y = Σ_i R_iᵀ D_i B_i⁻¹ R_i x`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>, DdmError> {
        if x.len() != self.n {
            return Err(DdmError::Dimension { expected: self.n, got: x.len() });
        }
        let y = self.apply_block_checked(Mat::from_fn(self.n, 1, |i, _| x[i]).as_ref())?;
        Ok((0..self.n).map(|i| y[(i, 0)]).collect())
    }

    pub fn apply_block_checked(&self, x: MatRef<'_, C64>) -> Result<Mat<C64>, DdmError> {
        if x.nrows() != self.n {
            return Err(DdmError::Dimension { expected: self.n, got: x.nrows() });
        }
        let m = x.ncols();
        let local: Vec<Mat<C64>> = self
            .locals
            .par_iter()
            .map(|l| {
                let mut r = Mat::from_fn(l.dofs.len(), m, |i, j| x[(l.dofs[i], j)]);
                l.lu.solve_in_place(r.as_mut());
                r
            })
            .collect();
        let mut y = Mat::<C64>::zeros(self.n, m);
        for (l, r) in self.locals.iter().zip(&local) {
            for j in 0..m {
                for (i, (&d, &w)) in l.dofs.iter().zip(&l.weights).enumerate() {
                    if w != 0.0 {
                        y[(d, j)] += r[(i, j)] * w;
                    }
                }
            }
        }
        Ok(y)
    }
}

impl LinearOperator for OrasPreconditioner {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_block(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        self.apply_block_checked(x).expect("dimension checked by the caller")
    }
}
