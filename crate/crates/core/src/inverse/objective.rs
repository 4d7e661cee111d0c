//! Misfit functional, adjoint gradient and the linearized problem.

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::forward::{ForwardProblem, ForwardSolution};
use super::lbfgs::Objective;
use super::InverseError;
use crate::fem::{mass_action, nodal_mass_gradient, MaterialField, TetElement};
use crate::mesh::{Mesh, REGION_IMAGING};
use crate::scattering::ScatteringMatrix;
use crate::sparse::CsrMatrix;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    /// Tikhonov weight `α` on `½∫|∇κ|²`.
    pub alpha: f64,
    /// Divide each misfit term by `|S^empty_ij|²`.
    pub normalize: bool,
    /// L-BFGS memory.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `J ≤ relative_tol · J₀`.
    pub relative_tol: f64,
    /// Stop when `J ≤ absolute_tol`.
    pub absolute_tol: f64,
    /// Largest change of any `ε_r` component in the first step.
    pub initial_step: f64,
    /// Zero-based transmitting ports; empty means all.
    pub transmitters: Vec<usize>,
    /// Nodes whose `ε_r` is optimized; empty means every imaging-region node.
    pub active: Vec<usize>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            normalize: true,
            memory: 10,
            max_iter: 60,
            relative_tol: 1e-2,
            absolute_tol: 0.0,
            initial_step: 2.0,
            transmitters: Vec::new(),
            active: Vec::new(),
        }
    }
}

/// Nodes touched by imaging-region tets, sorted.
pub fn imaging_nodes(mesh: &Mesh) -> Vec<usize> {
    let mut mark = vec![false; mesh.n_nodes()];
    for t in mesh.tets().iter().filter(|t| t.region == REGION_IMAGING) {
        for &n in &t.nodes {
            mark[n] = true;
        }
    }
    (0..mesh.n_nodes()).filter(|&n| mark[n]).collect()
}

/// P1 stiffness `∫ ∇φ_a·∇φ_b` over imaging-region tets.
pub fn p1_stiffness(mesh: &Mesh) -> CsrMatrix {
    let mut trip = Vec::new();
    for (t, tet) in mesh.tets().iter().enumerate() {
        if tet.region != REGION_IMAGING {
            continue;
        }
        let e = TetElement::new(mesh.tet_points(t), [1.0; 6]);
        for a in 0..4 {
            for b in 0..4 {
                trip.push((tet.nodes[a], tet.nodes[b], C64::new(e.volume * e.grads[a].dot(&e.grads[b]), 0.0)));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), trip)
}

/// One misfit term `(rx, tx, w, S − S^mes)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub rx: usize,
    pub tx: usize,
    pub weight: f64,
    pub value: C64,
}

#[derive(Debug)]
pub struct CostEvaluation {
    pub material: MaterialField,
    pub cost: f64,
    pub misfit: f64,
    pub regularization: f64,
    pub solution: ForwardSolution,
    pub residuals: Vec<Residual>,
}

/// `J(ε) = ½ Σ w_ij |S_ij − S^mes_ij|² + (α/2) ∫|∇κ|²` over the imaging region.
pub struct Tomography<'a> {
    pub problem: &'a ForwardProblem,
    pub measured: &'a ScatteringMatrix,
    pub config: &'a InverseConfig,
    /// Material outside the active set.
    pub base: MaterialField,
    transmitters: Vec<usize>,
    weights: Vec<f64>,
    active: Vec<usize>,
    stiffness: CsrMatrix,
}

impl<'a> Tomography<'a> {
    pub fn new(
        problem: &'a ForwardProblem,
        measured: &'a ScatteringMatrix,
        empty: Option<&ScatteringMatrix>,
        config: &'a InverseConfig,
        base: MaterialField,
    ) -> Result<Self, InverseError> {
        let n = problem.n_ports();
        if measured.n_ports() != n {
            return Err(InverseError::Config(format!("measured data has {} ports, mesh has {n}", measured.n_ports())));
        }
        base.check(&problem.mesh)?;
        let transmitters = if config.transmitters.is_empty() { (0..n).collect() } else { config.transmitters.clone() };
        let mut weights = vec![0.0; n * n];
        for &tx in &transmitters {
            if tx >= n {
                return Err(InverseError::Config(format!("transmitter {} does not exist", tx + 1)));
            }
            for rx in 0..n {
                if measured.get(rx, tx).is_none() {
                    continue;
                }
                weights[rx * n + tx] = if config.normalize {
                    let e = empty
                        .and_then(|e| e.get(rx, tx))
                        .ok_or_else(|| InverseError::Config(format!("no empty-chamber value for pair ({}, {})", tx + 1, rx + 1)))?;
                    if e.norm() == 0.0 {
                        return Err(InverseError::Config(format!("empty-chamber value for pair ({}, {}) is zero", tx + 1, rx + 1)));
                    }
                    1.0 / e.norm_sqr()
                } else {
                    1.0
                };
            }
        }
        let imaging = imaging_nodes(&problem.mesh);
        let active = if config.active.is_empty() {
            imaging
        } else {
            let allowed: std::collections::HashSet<usize> = imaging.into_iter().collect();
            if let Some(n) = config.active.iter().find(|n| !allowed.contains(n)) {
                return Err(InverseError::Config(format!("active node {n} is outside the imaging region")));
            }
            let mut a = config.active.clone();
            a.sort_unstable();
            a.dedup();
            a
        };
        Ok(Self {
            problem,
            measured,
            config,
            base,
            transmitters,
            weights,
            active,
            stiffness: p1_stiffness(&problem.mesh),
        })
    }

    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }

    pub fn transmitters(&self) -> &[usize] {
        &self.transmitters
    }

    fn c(&self) -> f64 {
        self.problem.params.k0_sq()
    }

    /// Pack the active nodes as `[Re ε, Im ε]` pairs.
    pub fn to_vector(&self, m: &MaterialField) -> Vec<f64> {
        self.active.iter().flat_map(|&n| [m.eps[n].re, m.eps[n].im]).collect()
    }

    pub fn to_material(&self, x: &[f64]) -> MaterialField {
        let mut m = self.base.clone();
        for (k, &n) in self.active.iter().enumerate() {
            m.eps[n] = C64::new(x[2 * k], x[2 * k + 1]);
        }
        m
    }

    /// `(α/2) ∫|∇κ|²` and its nodal gradient w.r.t. `(Re ε, Im ε)` packed as complex.
    pub fn regularization(&self, m: &MaterialField) -> (f64, Vec<C64>) {
        if self.config.alpha == 0.0 {
            return (0.0, vec![C64::new(0.0, 0.0); m.eps.len()]);
        }
        let scale = self.config.alpha * self.c() * self.c();
        let k_eps = self.stiffness.mul_vec(&m.eps);
        let quad: f64 = m.eps.iter().zip(&k_eps).map(|(e, k)| (e.conj() * k).re).sum();
        (0.5 * scale * quad, k_eps.into_iter().map(|v| v * scale).collect())
    }

    pub fn evaluate(&self, m: &MaterialField) -> Result<CostEvaluation, InverseError> {
        let solution = self.problem.forward(m, &self.transmitters)?;
        let n = self.problem.n_ports();
        let mut residuals = Vec::new();
        let mut misfit = 0.0;
        for &tx in &self.transmitters {
            for rx in 0..n {
                let w = self.weights[rx * n + tx];
                if w == 0.0 {
                    continue;
                }
                let s = solution.smatrix.get(rx, tx).expect("simulated entry");
                let r = s - self.measured.get(rx, tx).expect("weighted entries are measured");
                misfit += 0.5 * w * r.norm_sqr();
                residuals.push(Residual { rx, tx, weight: w, value: r });
            }
        }
        let (regularization, _) = self.regularization(m);
        Ok(CostEvaluation { material: m.clone(), cost: misfit + regularization, misfit, regularization, solution, residuals })
    }

    /// Adjoint right-hand sides `f_j = Σ_i w_ij r_ij mᵢ / Nᵢ`, one column per transmitter.
    pub fn adjoint_rhs(&self, eval: &CostEvaluation) -> Mat<C64> {
        let mut f = Mat::<C64>::zeros(self.problem.n_dofs(), self.transmitters.len());
        for r in &eval.residuals {
            let k = self.transmitters.iter().position(|&t| t == r.tx).unwrap();
            let port = &self.problem.ports.ports[r.rx];
            let coef = r.value * (r.weight / port.norm_sq);
            for &(d, m) in &port.load {
                f[(d, k)] += coef * m;
            }
        }
        f
    }

    /// Adjoint fields `F_j`, reusing the forward operator and preconditioner.
    pub fn solve_adjoint(&self, eval: &CostEvaluation) -> Result<Mat<C64>, InverseError> {
        let f = self.adjoint_rhs(eval);
        let (fields, _) = self.problem.solve_block_converged(&eval.solution.operator, f.as_ref(), &self.transmitters)?;
        Ok(fields)
    }

    /// Nodal gradient `∂J/∂Re ε_n + i ∂J/∂Im ε_n`, zero off the active set.
    pub fn gradient(&self, eval: &CostEvaluation, adjoint: &Mat<C64>) -> Vec<C64> {
        let p = self.problem;
        let mut g = vec![C64::new(0.0, 0.0); p.mesh.n_nodes()];
        for k in 0..self.transmitters.len() {
            let e = p.edge_field(&eval.solution.fields, k);
            let f = p.edge_field(adjoint, k);
            for (gn, v) in g.iter_mut().zip(nodal_mass_gradient(&p.mesh, &p.dof_map, &e, &f)) {
                *gn += v;
            }
        }
        let c = self.c();
        let (_, reg) = self.regularization(&eval.material);
        let mut out = vec![C64::new(0.0, 0.0); g.len()];
        for &n in &self.active {
            out[n] = C64::new(c * g[n].re, -c * g[n].im) + reg[n];
        }
        out
    }

    /// Cost and packed gradient: one assembly, one factorization, two block solves.
    pub fn cost_and_gradient(&self, m: &MaterialField) -> Result<(CostEvaluation, Vec<C64>), InverseError> {
        let eval = self.evaluate(m)?;
        let adjoint = self.solve_adjoint(&eval)?;
        let g = self.gradient(&eval, &adjoint);
        Ok((eval, g))
    }

    /// Field perturbations `δE_j` solving `A δE_j = M(δκ) E_j` with
    /// `δκ = ω²μ0ε0 δε`.
    pub fn solve_linearized(&self, eval: &CostEvaluation, deps: &[C64]) -> Result<Mat<C64>, InverseError> {
        let p = self.problem;
        let dk: Vec<C64> = deps.iter().map(|v| v * self.c()).collect();
        let mut rhs = Mat::<C64>::zeros(p.n_dofs(), self.transmitters.len());
        for k in 0..self.transmitters.len() {
            let e = p.edge_field(&eval.solution.fields, k);
            let full = mass_action(&p.mesh, &p.dof_map, &dk, &e);
            for (i, &edge) in p.dof_map.free_edges().iter().enumerate() {
                rhs[(i, k)] = full[edge];
            }
        }
        let (de, _) = p.solve_block_converged(&eval.solution.operator, rhs.as_ref(), &self.transmitters)?;
        Ok(de)
    }

    /// `DJ(ε; δε)` through the linearized S perturbation,
    /// `Σ w_ij Re[conj(r_ij) δS_ij]` plus the regularization term.
    pub fn directional_derivative_linearized(&self, eval: &CostEvaluation, deps: &[C64]) -> Result<f64, InverseError> {
        let de = self.solve_linearized(eval, deps)?;
        let mut dj = 0.0;
        for r in &eval.residuals {
            let k = self.transmitters.iter().position(|&t| t == r.tx).unwrap();
            let port = &self.problem.ports.ports[r.rx];
            let u: Vec<C64> = (0..de.nrows()).map(|i| de[(i, k)]).collect();
            let ds = port.project(&u).conj() / port.norm_sq;
            dj += r.weight * (r.value.conj() * ds).re;
        }
        let (_, reg) = self.regularization(&eval.material);
        dj += self.active.iter().map(|&n| reg[n].re * deps[n].re + reg[n].im * deps[n].im).sum::<f64>();
        Ok(dj)
    }
}

impl Objective for Tomography<'_> {
    type Error = InverseError;

    fn dim(&self) -> usize {
        2 * self.active.len()
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), InverseError> {
        let m = self.to_material(x);
        let (eval, g) = self.cost_and_gradient(&m)?;
        let packed = self.active.iter().flat_map(|&n| [g[n].re, g[n].im]).collect();
        Ok((eval.cost, packed))
    }
}
