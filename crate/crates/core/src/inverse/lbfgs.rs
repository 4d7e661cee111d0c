//! Limited-memory BFGS with backtracking Armijo line search.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// A differentiable cost `f: ℝⁿ → ℝ`.
pub trait Objective {
    type Error;

    fn dim(&self) -> usize;

    /// `(f(x), ∇f(x))`.
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), Self::Error>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `f ≤ relative_tol · f(x₀)`.
    pub relative_tol: f64,
    /// Stop when `f ≤ absolute_tol`.
    pub absolute_tol: f64,
    /// Largest component of the first (steepest-descent) step.
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 100, relative_tol: 0.0, absolute_tol: 0.0, initial_step: 1.0, c1: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Accepted step length, `0` for the initial point.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub grad: Vec<f64>,
    pub history: Vec<HistoryRecord>,
    pub termination: Termination,
}

/// History as CSV with header `iter,cost,grad_norm,step`.
pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut s = String::from("iter,cost,grad_norm,step\n");
    for h in history {
        writeln!(s, "{},{:.16e},{:.16e},{:.16e}", h.iter, h.cost, h.grad_norm, h.step).unwrap();
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `-H g` by the two-loop recursion with `H₀ = γI`, `γ = sᵀy / yᵀy` of the newest pair.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let (s, y, _) = pairs.back().expect("non-empty history");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn steepest(g: &[f64], step: f64) -> Vec<f64> {
    let inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if inf == 0.0 {
        return vec![0.0; g.len()];
    }
    g.iter().map(|v| -v * step / inf).collect()
}

/// Minimize `f` from `x0`. `on_iter` sees every history record and iterate,
/// starting with the initial point.
pub fn minimize<O: Objective>(
    f: &mut O,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    mut on_iter: impl FnMut(&HistoryRecord, &[f64]),
) -> Result<LbfgsResult, O::Error> {
    let mut x = x0;
    let (mut cost, mut grad) = f.evaluate(&x)?;
    let f0 = cost;
    let mut history = vec![HistoryRecord { iter: 0, cost, grad_norm: norm(&grad), step: 0.0 }];
    on_iter(&history[0], &x);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let done = |c: f64| c <= opts.relative_tol * f0 || c <= opts.absolute_tol;

    let mut termination = Termination::MaxIterations;
    for iter in 1..=opts.max_iter {
        if done(cost) {
            termination = Termination::Converged;
            break;
        }
        let mut d = if pairs.is_empty() { steepest(&grad, opts.initial_step) } else { two_loop(&grad, &pairs) };
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = steepest(&grad, opts.initial_step);
            slope = dot(&grad, &d);
        }
        if !(slope < 0.0) {
            termination = Termination::LineSearchFailed;
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (cn, gn) = f.evaluate(&xn)?;
            if cn.is_finite() && cn <= cost + opts.c1 * t * slope {
                accepted = Some((xn, cn, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, cn, gn)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && opts.memory > 0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        cost = cn;
        grad = gn;
        let rec = HistoryRecord { iter, cost, grad_norm: norm(&grad), step: t };
        history.push(rec);
        on_iter(&rec, &x);
    }
    if termination == Termination::MaxIterations && done(cost) {
        termination = Termination::Converged;
    }
    Ok(LbfgsResult { x, cost, grad, history, termination })
}
