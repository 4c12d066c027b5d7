//! Latin hypercube designs and a bounded multistart quasi-Newton minimizer.

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};

/// `n` points in `[0, 1)^d`, one per stratum `[i/n, (i+1)/n)` along every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LhsDesign {
    points: Vec<Vec<f64>>,
}

impl LhsDesign {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn lhs<R: rand::Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> LhsDesign {
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let v = (perm[i] as f64 + u) / n as f64;
            // keep rounding from pushing the point into the next stratum
            let upper = ((perm[i] + 1) as f64 / n as f64).next_down();
            p[j] = v.min(upper);
        }
    }
    LhsDesign { points }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Optional relative objective-change stopping rule.
    pub f_rel_tol: Option<f64>,
    pub memory: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-8, f_rel_tol: None, memory: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the start value.
    pub history: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected L-BFGS with an Armijo backtracking search along the projected path.
///
/// Returns `None` when the objective is not finite at the start point.
pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LocalOptions,
) -> Option<LocalResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut history = vec![fx];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let pg_norm = (0..n)
            .map(|i| ((x[i] - g[i]).clamp(lower[i], upper[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if pg_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        let free_g: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { g[i] }).collect();

        let mut accepted = None;
        for attempt in 0..2 {
            let mut dir = if attempt == 0 && !mem.is_empty() {
                two_loop(&free_g, &mem)
            } else {
                free_g.iter().map(|v| -v).collect()
            };
            for i in 0..n {
                if active[i] {
                    dir[i] = 0.0;
                }
            }
            if dot(&dir, &g) >= 0.0 {
                continue;
            }
            // First steepest-descent step: cap the move at the box width.
            let mut t = 1.0;
            if mem.is_empty() {
                let max_move = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let width = (0..n).map(|i| upper[i] - lower[i]).fold(0.0, f64::max);
                if max_move > width && width.is_finite() {
                    t = width / max_move;
                }
            }
            for _ in 0..50 {
                let mut xt: Vec<f64> = (0..n).map(|i| x[i] + t * dir[i]).collect();
                project(&mut xt, lower, upper);
                let step: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
                let decrease = dot(&g, &step);
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                let (ft, gt) = f(&xt);
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + 1e-4 * decrease
                {
                    accepted = Some((xt, ft, gt, step));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            mem.clear();
        }

        let Some((xt, ft, gt, step)) = accepted else {
            // No descent possible at floating-point resolution.
            converged = true;
            break;
        };
        let yv: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&step, &yv);
        if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((step, yv, 1.0 / sy));
        }
        let f_prev = fx;
        x = xt;
        fx = ft;
        g = gt;
        history.push(fx);
        if let Some(tol) = opts.f_rel_tol {
            if (f_prev - fx).abs() <= tol * fx.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }

    Some(LocalResult { x, value: fx, iterations, converged, history })
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for i in 0..q.len() {
            q[i] -= a * y[i];
        }
        alphas.push(a);
    }
    let (s, y, _) = mem.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for i in 0..q.len() {
            q[i] += s[i] * (a - b);
        }
    }
    q.iter().map(|v| -v).collect()
}

#[derive(Debug, Clone)]
pub struct MultistartResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at every start point (non-finite starts included as NaN).
    pub start_values: Vec<f64>,
}

/// Minimizes `f` over `[0, 1]^d` from `n_restarts` LHS starts plus `extra_starts`.
///
/// The best terminal point wins; ties go to the lowest restart index.
pub fn minimize_bounded<F, R>(
    mut f: F,
    d: usize,
    n_restarts: usize,
    extra_starts: &[Vec<f64>],
    rng: &mut R,
) -> Result<MultistartResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: rand::Rng + ?Sized,
{
    let lower = vec![0.0; d];
    let upper = vec![1.0; d];
    let mut starts = lhs(n_restarts, d, rng).into_points();
    starts.extend(extra_starts.iter().cloned());
    let opts = LocalOptions::default();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut start_values = Vec::with_capacity(starts.len());
    for s in &starts {
        match minimize_box(&mut f, s, &lower, &upper, &opts) {
            None => start_values.push(f64::NAN),
            Some(res) => {
                start_values.push(res.history[0]);
                if best.as_ref().is_none_or(|(_, v)| res.value < *v) {
                    best = Some((res.x, res.value));
                }
            }
        }
    }
    let (x, value) = best.ok_or(Error::NoFiniteStart)?;
    Ok(MultistartResult { x, value, start_values })
}
