//! Forward problem driver: assembly, ORAS set-up and preconditioned GMRES
//! solves, with counters for operator reuse.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::InverseError;
use crate::ddm::{assemble_local_matrices, OrasPreconditioner, SchwarzVariant};
use crate::fem::{assemble_system, build_ports, ComplexSparseSystem, EdgeDofMap, MaterialField, PhysicsParams, PortFrame, PortSet};
use crate::krylov::{gmres, GmresOptions, SolveStats};
use crate::mesh::{build_partition_of_unity, grow_overlap, partition, Mesh, OverlapDecomposition, PartitionStrategy};
use crate::scattering::{compute_smatrix, ScatteringMatrix};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_subdomains: usize,
    /// Overlap `δ` in layers of node-adjacent tets.
    pub overlap: usize,
    pub variant: SchwarzVariant,
    pub partition: PartitionStrategy,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_subdomains: 4,
            overlap: 2,
            variant: SchwarzVariant::Oras,
            partition: PartitionStrategy::CoordinateBisection,
            tol: 1e-8,
            max_iter: 500,
            restart: None,
        }
    }
}

impl SolverConfig {
    pub fn gmres_options(&self) -> GmresOptions {
        GmresOptions { tol: self.tol, max_iter: self.max_iter, restart: self.restart }
    }
}

/// Work counters, incremented by every [`ForwardProblem`] operation.
#[derive(Debug, Default)]
pub struct Counters {
    assemblies: AtomicUsize,
    factorizations: AtomicUsize,
    block_solves: AtomicUsize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub assemblies: usize,
    pub factorizations: usize,
    pub block_solves: usize,
}

impl std::ops::Sub for CounterSnapshot {
    type Output = CounterSnapshot;

    fn sub(self, o: Self) -> Self {
        CounterSnapshot {
            assemblies: self.assemblies - o.assemblies,
            factorizations: self.factorizations - o.factorizations,
            block_solves: self.block_solves - o.block_solves,
        }
    }
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            assemblies: self.assemblies.load(Ordering::Relaxed),
            factorizations: self.factorizations.load(Ordering::Relaxed),
            block_solves: self.block_solves.load(Ordering::Relaxed),
        }
    }
}

/// Assembled operator and its factorized preconditioner for one material.
#[derive(Debug)]
pub struct Operator {
    pub system: ComplexSparseSystem,
    pub precond: OrasPreconditioner,
}

/// Solved fields for a set of transmitters.
#[derive(Debug)]
pub struct ForwardSolution {
    pub operator: Operator,
    /// Column `k` is the field of port `transmitters[k]`, free numbering.
    pub fields: Mat<C64>,
    pub transmitters: Vec<usize>,
    pub smatrix: ScatteringMatrix,
    pub stats: SolveStats,
}

/// Everything that stays fixed while the material changes.
#[derive(Debug)]
pub struct ForwardProblem {
    pub mesh: Mesh,
    pub dof_map: EdgeDofMap,
    pub ports: PortSet,
    pub params: PhysicsParams,
    pub solver: SolverConfig,
    pub decomposition: OverlapDecomposition,
    pub counters: Counters,
}

impl ForwardProblem {
    pub fn new(mesh: Mesh, frames: &[PortFrame], params: PhysicsParams, solver: SolverConfig) -> Result<Self, InverseError> {
        let dof_map = EdgeDofMap::build(&mesh);
        let ports = build_ports(&mesh, &dof_map, frames, &params)?;
        let assignment = partition(&mesh, solver.n_subdomains, solver.partition)?;
        let delta = if solver.n_subdomains == 1 { solver.overlap.max(1) } else { solver.overlap };
        let mut decomposition = grow_overlap(&mesh, &assignment, delta)?;
        build_partition_of_unity(&mut decomposition, &mesh, &dof_map)?;
        Ok(Self { mesh, dof_map, ports, params, solver, decomposition, counters: Counters::default() })
    }

    pub fn n_ports(&self) -> usize {
        self.ports.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_map.n_free()
    }

    /// One assembly and one preconditioner factorization.
    pub fn operator(&self, material: &MaterialField) -> Result<Operator, InverseError> {
        let system = assemble_system(&self.mesh, &self.dof_map, material, &self.params, &self.ports)?;
        self.counters.assemblies.fetch_add(1, Ordering::Relaxed);
        let precond = assemble_local_matrices(
            &self.mesh,
            &self.decomposition,
            &self.dof_map,
            material,
            &self.params,
            &system.matrix,
            self.ports.beta,
            self.solver.variant,
        )?;
        self.counters.factorizations.fetch_add(1, Ordering::Relaxed);
        Ok(Operator { system, precond })
    }

    /// One pseudo-block GMRES solve for all columns of `rhs`.
    pub fn solve_block(&self, op: &Operator, rhs: MatRef<'_, C64>) -> Result<(Mat<C64>, SolveStats), InverseError> {
        let out = gmres(&op.system.matrix, &op.precond, rhs, &self.solver.gmres_options())?;
        self.counters.block_solves.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    /// Like [`Self::solve_block`], but non-convergence of any column is an error.
    pub fn solve_block_converged(&self, op: &Operator, rhs: MatRef<'_, C64>, labels: &[usize]) -> Result<(Mat<C64>, SolveStats), InverseError> {
        let (x, stats) = self.solve_block(op, rhs)?;
        if let Some(k) = stats.converged.iter().position(|&c| !c) {
            return Err(InverseError::NotConverged {
                transmitter: labels.get(k).map_or(k, |&t| t + 1),
                residual: stats.residuals[k],
                iterations: stats.iterations[k],
            });
        }
        Ok((x, stats))
    }

    /// Port right-hand sides for the zero-based `transmitters`.
    pub fn rhs(&self, op: &Operator, transmitters: &[usize]) -> Mat<C64> {
        let b = &op.system.rhs;
        Mat::from_fn(b.nrows(), transmitters.len(), |i, k| b[(i, transmitters[k])])
    }

    pub fn forward(&self, material: &MaterialField, transmitters: &[usize]) -> Result<ForwardSolution, InverseError> {
        if let Some(&t) = transmitters.iter().find(|&&t| t >= self.n_ports()) {
            return Err(InverseError::Config(format!("transmitter {} does not exist", t + 1)));
        }
        let operator = self.operator(material)?;
        let rhs = self.rhs(&operator, transmitters);
        let (fields, stats) = self.solve_block_converged(&operator, rhs.as_ref(), transmitters)?;
        let smatrix = compute_smatrix(&self.ports, fields.as_ref(), transmitters, self.params.frequency)?;
        Ok(ForwardSolution { operator, fields, transmitters: transmitters.to_vec(), smatrix, stats })
    }

    /// Column `k` of `block` extended to global edge numbering.
    pub fn edge_field(&self, block: &Mat<C64>, k: usize) -> Vec<C64> {
        let free: Vec<C64> = (0..block.nrows()).map(|i| block[(i, k)]).collect();
        self.dof_map.extend(&free)
    }
}
