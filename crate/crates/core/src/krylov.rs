//! Right-preconditioned GMRES for blocks of right-hand sides.
//!
//! Every column runs its own Arnoldi process; operator and preconditioner
//! applications are fused across the active columns, so the iterates of each
//! column are those of a single-RHS run.

use std::time::Instant;

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::sparse::CsrMatrix;
use crate::C64;

/// A linear map applied to blocks of column vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_block(&self, x: MatRef<'_, C64>) -> Mat<C64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_block(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        self.mul_block(x)
    }
}

/// `M⁻¹ = I`.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_block(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        x.to_owned()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KrylovError {
    #[error("operator dimension {op} does not match right-hand side length {rhs}")]
    Dimension { op: usize, rhs: usize },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Arnoldi vectors per cycle; `None` never restarts.
    pub restart: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, restart: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: Vec<usize>,
    /// `‖b − A x‖ / ‖b‖`, recomputed at exit.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    pub restarts: Vec<usize>,
    pub wall_time: f64,
}

impl SolveStats {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(a, b)` with `a` conjugated.
fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Arnoldi,
    CycleDone,
    Finished,
}

struct Column {
    b_norm: f64,
    x: Vec<C64>,
    basis: Vec<Vec<C64>>,
    hess: Vec<Vec<C64>>,
    cs: Vec<f64>,
    sn: Vec<C64>,
    g: Vec<C64>,
    iterations: usize,
    restarts: usize,
    resumed: bool,
    phase: Phase,
    estimate: f64,
    residual: f64,
}

impl Column {
    fn start_cycle(&mut self, r: Vec<C64>) {
        let beta = norm(&r);
        self.basis.clear();
        self.hess.clear();
        self.cs.clear();
        self.sn.clear();
        self.g = vec![C64::new(beta, 0.0)];
        self.estimate = beta / self.b_norm;
        if beta == 0.0 {
            self.phase = Phase::Finished;
            return;
        }
        self.basis.push(r.into_iter().map(|v| v / beta).collect());
        self.phase = Phase::Arnoldi;
    }

    /// One Arnoldi step given `w = A M⁻¹ v_k`; classical Gram-Schmidt with one
    /// reorthogonalisation pass and a Givens update of the least-squares problem.
    fn step(&mut self, mut w: Vec<C64>, opts: &GmresOptions) {
        let k = self.basis.len() - 1;
        let w_norm = norm(&w);
        let mut h = vec![C64::new(0.0, 0.0); k + 2];
        for _ in 0..2 {
            let proj: Vec<C64> = self.basis.iter().map(|v| dot(v, &w)).collect();
            for (v, p) in self.basis.iter().zip(&proj) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= p * vi;
                }
            }
            for (hi, p) in h.iter_mut().zip(&proj) {
                *hi += p;
            }
        }
        let hn = norm(&w);
        h[k + 1] = C64::new(hn, 0.0);
        for i in 0..k {
            let t = self.cs[i] * h[i] + self.sn[i] * h[i + 1];
            h[i + 1] = -self.sn[i].conj() * h[i] + self.cs[i] * h[i + 1];
            h[i] = t;
        }
        let (a, b) = (h[k], h[k + 1]);
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (c, s) = if r == 0.0 {
            (1.0, C64::new(0.0, 0.0))
        } else if a.norm() == 0.0 {
            (0.0, b.conj() / b.norm())
        } else {
            let c = a.norm() / r;
            (c, (a / a.norm()) * b.conj() / r)
        };
        h[k] = c * a + s * b;
        h[k + 1] = C64::new(0.0, 0.0);
        self.cs.push(c);
        self.sn.push(s);
        let gk = self.g[k];
        self.g.push(-s.conj() * gk);
        self.g[k] = c * gk;
        self.hess.push(h);
        self.iterations += 1;
        self.estimate = self.g[k + 1].norm() / self.b_norm;

        let breakdown = hn <= 1e-14 * w_norm;
        let cycle_full = opts.restart.is_some_and(|m| self.basis.len() >= m);
        if self.estimate <= opts.tol || breakdown || cycle_full || self.iterations >= opts.max_iter {
            self.phase = Phase::CycleDone;
        } else {
            self.basis.push(w.into_iter().map(|v| v / hn).collect());
        }
    }

    /// `V y` for the least-squares solution `y` of the current cycle.
    fn combination(&self, n: usize) -> Vec<C64> {
        let k = self.hess.len();
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let s: C64 = (i + 1..k).map(|j| self.hess[j][i] * y[j]).sum();
            y[i] = (self.g[i] - s) / self.hess[i][i];
        }
        let mut z = vec![C64::new(0.0, 0.0); n];
        for (v, yi) in self.basis.iter().zip(&y) {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += yi * vi;
            }
        }
        z
    }
}

fn gather(cols: &[&Vec<C64>], n: usize) -> Mat<C64> {
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn column(m: &Mat<C64>, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Solve `A X = B` column by column with right preconditioner `M⁻¹`.
pub fn gmres(
    a: &dyn LinearOperator,
    m_inv: &dyn LinearOperator,
    b: MatRef<'_, C64>,
    opts: &GmresOptions,
) -> Result<(Mat<C64>, SolveStats), KrylovError> {
    let start = Instant::now();
    let n = a.dim();
    if b.nrows() != n || m_inv.dim() != n {
        return Err(KrylovError::Dimension { op: n, rhs: b.nrows() });
    }
    if !(opts.tol > 0.0) {
        return Err(KrylovError::Tolerance(opts.tol));
    }
    let mut cols: Vec<Column> = (0..b.ncols())
        .map(|j| {
            let r: Vec<C64> = (0..n).map(|i| b[(i, j)]).collect();
            let mut c = Column {
                b_norm: norm(&r),
                x: vec![C64::new(0.0, 0.0); n],
                basis: Vec::new(),
                hess: Vec::new(),
                cs: Vec::new(),
                sn: Vec::new(),
                g: Vec::new(),
                iterations: 0,
                restarts: 0,
                resumed: false,
                phase: Phase::Arnoldi,
                estimate: 1.0,
                residual: 0.0,
            };
            if c.b_norm == 0.0 {
                c.phase = Phase::Finished;
            } else {
                c.start_cycle(r);
                if opts.max_iter == 0 {
                    c.phase = Phase::CycleDone;
                }
            }
            c
        })
        .collect();

    loop {
        let active: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].phase == Phase::Arnoldi).collect();
        if !active.is_empty() {
            let v = gather(&active.iter().map(|&j| cols[j].basis.last().unwrap()).collect::<Vec<_>>(), n);
            let w = a.apply_block(m_inv.apply_block(v.as_ref()).as_ref());
            let mut work: Vec<(&mut Column, Vec<C64>)> = Vec::with_capacity(active.len());
            let mut it = active.iter().enumerate().peekable();
            for (j, c) in cols.iter_mut().enumerate() {
                if let Some((k, _)) = it.next_if(|&(_, &aj)| aj == j) {
                    work.push((c, column(&w, k)));
                }
            }
            work.into_par_iter().for_each(|(c, wj)| c.step(wj, opts));
        }

        let done: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].phase == Phase::CycleDone).collect();
        if !done.is_empty() {
            let z: Vec<Vec<C64>> = done.iter().map(|&j| cols[j].combination(n)).collect();
            let dx = m_inv.apply_block(gather(&z.iter().collect::<Vec<_>>(), n).as_ref());
            for (k, &j) in done.iter().enumerate() {
                for (i, xi) in cols[j].x.iter_mut().enumerate() {
                    *xi += dx[(i, k)];
                }
            }
            let xs = gather(&done.iter().map(|&j| &cols[j].x).collect::<Vec<_>>(), n);
            let ax = a.apply_block(xs.as_ref());
            for (k, &j) in done.iter().enumerate() {
                let r: Vec<C64> = (0..n).map(|i| b[(i, j)] - ax[(i, k)]).collect();
                let c = &mut cols[j];
                c.residual = norm(&r) / c.b_norm;
                let can_continue = c.iterations < opts.max_iter;
                let restart_due = c.estimate > opts.tol && opts.restart.is_some() && can_continue;
                let drift = c.residual > 10.0 * opts.tol && !c.resumed && can_continue && !restart_due;
                if restart_due || drift {
                    c.resumed |= drift;
                    c.restarts += 1;
                    c.start_cycle(r);
                } else {
                    c.phase = Phase::Finished;
                }
            }
        }
        if cols.iter().all(|c| c.phase == Phase::Finished) {
            break;
        }
    }

    let x = Mat::from_fn(n, cols.len(), |i, j| cols[j].x[i]);
    let stats = SolveStats {
        iterations: cols.iter().map(|c| c.iterations).collect(),
        residuals: cols.iter().map(|c| c.residual).collect(),
        converged: cols.iter().map(|c| c.b_norm == 0.0 || c.residual <= opts.tol).collect(),
        restarts: cols.iter().map(|c| c.restarts).collect(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(n: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(i as f64 + 1.0, 0.0))).collect())
    }

    fn random_system(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, C64::new(4.0 + rng.random::<f64>(), rng.random::<f64>())));
            for _ in 0..4 {
                let j = rng.random_range(0..n);
                t.push((i, j, C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn identity_converges_at_once() {
        let b = Mat::from_fn(5, 1, |i, _| C64::new(i as f64, 1.0));
        let (x, s) = gmres(&Identity(5), &Identity(5), b.as_ref(), &GmresOptions::default()).unwrap();
        assert_eq!(s.iterations, vec![1]);
        for i in 0..5 {
            assert!((x[(i, 0)] - b[(i, 0)]).norm() < 1e-15);
        }
    }

    #[test]
    fn diagonal_system() {
        let a = diag(10);
        let b = Mat::from_fn(10, 1, |_, _| C64::new(1.0, 0.0));
        let opts = GmresOptions { tol: 1e-12, ..Default::default() };
        let (x, s) = gmres(&a, &Identity(10), b.as_ref(), &opts).unwrap();
        assert!(s.iterations[0] <= 10);
        for i in 0..10 {
            assert!((x[(i, 0)].re - 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
        assert!(s.residuals[0] <= 1e-12);
    }

    #[test]
    fn zero_rhs_column() {
        let a = diag(4);
        let b = Mat::from_fn(4, 2, |i, j| if j == 0 { C64::new(0.0, 0.0) } else { C64::new(i as f64, 0.0) });
        let (x, s) = gmres(&a, &Identity(4), b.as_ref(), &GmresOptions::default()).unwrap();
        assert_eq!(s.iterations[0], 0);
        assert!(s.converged[0]);
        assert!((0..4).all(|i| x[(i, 0)].norm() == 0.0));
    }

    #[test]
    fn block_matches_single_solves() {
        let a = random_system(50, 7);
        let b = Mat::from_fn(50, 4, |i, j| C64::new(((i * (j + 1)) as f64).sin(), (i as f64 - j as f64).cos()));
        let opts = GmresOptions { tol: 1e-10, ..Default::default() };
        let (xb, sb) = gmres(&a, &Identity(50), b.as_ref(), &opts).unwrap();
        for j in 0..4 {
            let bj = Mat::from_fn(50, 1, |i, _| b[(i, j)]);
            let (xj, sj) = gmres(&a, &Identity(50), bj.as_ref(), &opts).unwrap();
            assert_eq!(sj.iterations[0], sb.iterations[j]);
            let diff: f64 = (0..50).map(|i| (xj[(i, 0)] - xb[(i, j)]).norm_sqr()).sum::<f64>().sqrt();
            let scale: f64 = (0..50).map(|i| xj[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
            assert!(diff / scale < 1e-12);
        }
    }

    #[test]
    fn restarted_run_converges() {
        let a = random_system(60, 3);
        let b = Mat::from_fn(60, 1, |i, _| C64::new(1.0, i as f64 * 0.01));
        let opts = GmresOptions { tol: 1e-9, max_iter: 400, restart: Some(10) };
        let (_, s) = gmres(&a, &Identity(60), b.as_ref(), &opts).unwrap();
        assert!(s.converged[0]);
        assert!(s.restarts[0] >= 1);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let a = random_system(40, 11);
        let b = Mat::from_fn(40, 1, |_, _| C64::new(1.0, 0.0));
        let opts = GmresOptions { tol: 1e-14, max_iter: 3, restart: None };
        let (_, s) = gmres(&a, &Identity(40), b.as_ref(), &opts).unwrap();
        assert_eq!(s.iterations[0], 3);
        assert!(!s.converged[0]);
    }
}
