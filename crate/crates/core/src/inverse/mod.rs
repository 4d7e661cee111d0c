//! Misfit functional, adjoint gradient, Tikhonov regularization, L-BFGS and
//! per-ring truncation.

mod forward;
mod lbfgs;
mod objective;
mod truncate;

pub use forward::{CounterSnapshot, Counters, ForwardProblem, ForwardSolution, Operator, SolverConfig};
pub use lbfgs::{history_csv, minimize, HistoryRecord, LbfgsOptions, LbfgsResult, Objective, Termination};
pub use objective::{imaging_nodes, p1_stiffness, CostEvaluation, InverseConfig, Residual, Tomography};
pub use truncate::{truncate_for_ring, TruncatedMesh};

use crate::ddm::DdmError;
use crate::fem::{FemError, MaterialField};
use crate::krylov::KrylovError;
use crate::mesh::MeshError;
use crate::scattering::{ScatteringError, ScatteringMatrix};

#[derive(Debug, thiserror::Error)]
pub enum InverseError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ddm(#[from] DdmError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error("{0}")]
    Config(String),
    #[error("GMRES did not converge for transmitter {transmitter}: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { transmitter: usize, residual: f64, iterations: usize },
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub material: MaterialField,
    pub history: Vec<HistoryRecord>,
    pub termination: Termination,
}

impl InverseConfig {
    pub fn lbfgs_options(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.memory,
            max_iter: self.max_iter,
            relative_tol: self.relative_tol,
            absolute_tol: self.absolute_tol,
            initial_step: self.initial_step,
            ..LbfgsOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), InverseError> {
        if !(self.alpha >= 0.0) {
            return Err(InverseError::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.relative_tol >= 0.0 && self.absolute_tol >= 0.0 && self.initial_step > 0.0) {
            return Err(InverseError::Config("stopping thresholds must be non-negative and the initial step positive".into()));
        }
        Ok(())
    }
}

/// Minimize the misfit from `initial`; `on_iter` sees each history record and
/// the current material.
pub fn reconstruct(
    problem: &ForwardProblem,
    measured: &ScatteringMatrix,
    empty: Option<&ScatteringMatrix>,
    config: &InverseConfig,
    initial: &MaterialField,
    mut on_iter: impl FnMut(&HistoryRecord, &MaterialField),
) -> Result<Reconstruction, InverseError> {
    config.validate()?;
    let mut objective = Tomography::new(problem, measured, empty, config, initial.clone())?;
    let x0 = objective.to_vector(initial);
    let active = objective.active_nodes().to_vec();
    let unpack = |x: &[f64]| {
        let mut m = initial.clone();
        for (k, &n) in active.iter().enumerate() {
            m.eps[n] = crate::C64::new(x[2 * k], x[2 * k + 1]);
        }
        m
    };
    let result = minimize(&mut objective, x0, &config.lbfgs_options(), |h, x| on_iter(h, &unpack(x)))?;
    Ok(Reconstruction { material: unpack(&result.x), history: result.history, termination: result.termination })
}
