//! Exact Gaussian-process regression with a constant mean and RBF-ARD kernel.
//!
//! Training maximizes the log marginal likelihood over
//! `(log s2, log Theta, log noise)` with the mean fixed to the sample mean of
//! the outputs. The Cholesky factor of `K = k(X, X) + noise I` is cached so
//! the posterior mean costs `O(n)` and the variance `O(n^2)` per query.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::RbfArd;
use crate::optim::{minimize_box, LocalOptions};
use crate::problem::Dataset;
use crate::stats::{ln_2pi, mean, variance};

/// Lower bound on the learned noise variance.
pub const NOISE_FLOOR: f64 = 1e-8;
const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 10.0);
const TRAINING_RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub mean_const: f64,
    pub kernel: RbfArd,
    pub noise_variance: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyperparams,
    data: Dataset,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Log marginal likelihood at each training start and at the chosen optimum.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub start_log_likelihoods: Vec<f64>,
    pub log_likelihood: f64,
    pub fallback: bool,
}

/// Posterior quantities at one point, with the pieces the acquisitions reuse.
#[derive(Debug, Clone)]
pub struct PointPosterior {
    pub mean: f64,
    pub var: f64,
    pub mean_grad: Vec<f64>,
    pub var_grad: Vec<f64>,
    /// `k(X, x)`.
    pub k: DVector<f64>,
    /// `d k(X, x) / dx`, one row per training point.
    pub dk: DMatrix<f64>,
    /// `K^-1 k(X, x)`.
    pub kinv_k: DVector<f64>,
}

fn kernel_matrix(kernel: &RbfArd, data: &Dataset) -> DMatrix<f64> {
    let n = data.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.signal_variance();
        for j in 0..i {
            let v = kernel.value(data.row(i), data.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `data`.
    ///
    /// On Cholesky failure a jitter of `1e-10 s2` is added, escalating by
    /// factors of ten up to `1e-4 s2`.
    pub fn new(data: Dataset, hyper: GpHyperparams) -> Result<Self> {
        if data.dim() != hyper.kernel.dim() && !data.is_empty() {
            return Err(Error::DimensionMismatch { expected: hyper.kernel.dim(), got: data.dim() });
        }
        let kf = kernel_matrix(&hyper.kernel, &data);
        let s2 = hyper.kernel.signal_variance();
        let mut jitter = 0.0;
        let chol = loop {
            let mut k = kf.clone();
            for i in 0..data.len() {
                k[(i, i)] += hyper.noise_variance + jitter;
            }
            if let Some(c) = k.cholesky() {
                break c;
            }
            jitter = if jitter == 0.0 { 1e-10 * s2 } else { jitter * 10.0 };
            if jitter > 1e-4 * s2 * 1.000_001 {
                return Err(Error::Training("Cholesky failed at maximum jitter".into()));
            }
        };
        let r = DVector::from_iterator(data.len(), data.outputs().iter().map(|y| y - hyper.mean_const));
        let alpha = chol.solve(&r);
        let lower = chol.l();
        Ok(Self { hyper, data, chol, lower, alpha, jitter })
    }

    /// Trains hyperparameters by multistart marginal-likelihood maximization.
    pub fn fit<R: rand::Rng + ?Sized>(data: Dataset, rng: &mut R) -> Result<Self> {
        Self::fit_with(data, rng, None).map(|(m, _)| m)
    }

    /// Like [`GpModel::fit`]; `warm` replaces the deterministic first start.
    pub fn fit_with<R: rand::Rng + ?Sized>(
        data: Dataset,
        rng: &mut R,
        warm: Option<&GpHyperparams>,
    ) -> Result<(Self, TrainingReport)> {
        let d = data.dim();
        let ys = data.outputs();
        let m0 = if ys.is_empty() { 0.0 } else { mean(ys) };
        let v = variance(ys);
        if data.len() < 2 || v <= 0.0 || !v.is_finite() {
            let s2 = if v > 0.0 && v.is_finite() { v } else { 1.0 };
            let hyper = GpHyperparams {
                mean_const: m0,
                kernel: RbfArd::new(s2, vec![0.1; d.max(1)])?,
                noise_variance: (1e-6 * s2).max(NOISE_FLOOR),
            };
            let model = Self::new(data, hyper)?;
            let report = TrainingReport {
                start_log_likelihoods: vec![],
                log_likelihood: f64::NAN,
                fallback: true,
            };
            return Ok((model, report));
        }

        let np = d + 2;
        let mut lower = vec![(1e-4 * v).ln()];
        let mut upper = vec![(1e2 * v).ln()];
        lower.extend(std::iter::repeat_n(LENGTHSCALE_BOUNDS.0.ln(), d));
        upper.extend(std::iter::repeat_n(LENGTHSCALE_BOUNDS.1.ln(), d));
        lower.push(NOISE_FLOOR.ln());
        upper.push(v.max(10.0 * NOISE_FLOOR).ln());

        let mut starts = Vec::with_capacity(TRAINING_RESTARTS);
        let first: Vec<f64> = match warm {
            Some(h) if h.kernel.dim() == d => {
                let mut p = vec![h.kernel.signal_variance().ln()];
                p.extend(h.kernel.lengthscales().iter().map(|l| l.ln()));
                p.push(h.noise_variance.ln());
                p
            }
            _ => {
                let mut p = vec![v.ln()];
                p.extend(std::iter::repeat_n(0.1f64.ln(), d));
                p.push((1e-3 * v).ln());
                p
            }
        };
        starts.push(first.iter().enumerate().map(|(i, p)| p.clamp(lower[i], upper[i])).collect());
        while starts.len() < TRAINING_RESTARTS {
            starts.push((0..np).map(|i| rng.random_range(lower[i]..=upper[i])).collect::<Vec<f64>>());
        }

        let objective = NegLogLikelihood::new(&data, m0);
        let opts = LocalOptions { max_iter: 100, grad_tol: 1e-6, f_rel_tol: Some(1e-10), memory: 10 };
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut start_lls = Vec::with_capacity(starts.len());
        for s in &starts {
            match minimize_box(|p: &[f64]| objective.eval(p), s, &lower, &upper, &opts) {
                None => start_lls.push(f64::NEG_INFINITY),
                Some(res) => {
                    start_lls.push(-res.history[0]);
                    if best.as_ref().is_none_or(|(_, f)| res.value < *f) {
                        best = Some((res.x, res.value));
                    }
                }
            }
        }
        let (p, f) = best.ok_or_else(|| Error::Training("no finite likelihood at any start".into()))?;
        let hyper = GpHyperparams {
            mean_const: m0,
            kernel: RbfArd::new(p[0].exp(), p[1..=d].iter().map(|l| l.exp()).collect())?,
            noise_variance: p[d + 1].exp().max(NOISE_FLOOR),
        };
        let model = Self::new(data, hyper)?;
        Ok((model, TrainingReport { start_log_likelihoods: start_lls, log_likelihood: -f, fallback: false }))
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn kernel(&self) -> &RbfArd {
        &self.hyper.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.hyper.kernel.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Noise variance on the diagonal of `K`, including any jitter.
    pub fn effective_noise(&self) -> f64 {
        self.hyper.noise_variance + self.jitter
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn lower_factor(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Log marginal likelihood of the cached factorization.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let r = DVector::from_iterator(
            self.len(),
            self.data.outputs().iter().map(|y| y - self.hyper.mean_const),
        );
        let logdet: f64 = self.lower.diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * r.dot(&self.alpha) - logdet - 0.5 * self.len() as f64 * ln_2pi()
    }

    pub fn k_vector(&self, x: &[f64]) -> DVector<f64> {
        let kern = &self.hyper.kernel;
        DVector::from_iterator(self.len(), self.data.rows().map(|r| kern.value(x, r)))
    }

    pub fn posterior_mean(&self, x: &[f64]) -> f64 {
        let kern = &self.hyper.kernel;
        let mut acc = self.hyper.mean_const;
        for (r, a) in self.data.rows().zip(self.alpha.iter()) {
            acc += a * kern.value(x, r);
        }
        acc
    }

    pub fn posterior_mean_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let kern = &self.hyper.kernel;
        let d = x.len();
        let mut g = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        let mut acc = self.hyper.mean_const;
        for (r, a) in self.data.rows().zip(self.alpha.iter()) {
            acc += a * kern.value_grad(x, r, &mut tmp);
            for i in 0..d {
                g[i] += a * tmp[i];
            }
        }
        (acc, g)
    }

    pub fn posterior_var(&self, x: &[f64]) -> f64 {
        let s2 = self.hyper.kernel.signal_variance();
        if self.is_empty() {
            return s2;
        }
        let v = self.whiten(&self.k_vector(x));
        (s2 - v.dot(&v)).max(0.0)
    }

    pub fn posterior_cov(&self, x: &[f64], y: &[f64]) -> f64 {
        let prior = self.hyper.kernel.value(x, y);
        if self.is_empty() {
            return prior;
        }
        let a = self.whiten(&self.k_vector(x));
        let b = self.whiten(&self.k_vector(y));
        prior - a.dot(&b)
    }

    /// `(var, d var / dx)` at `x`.
    pub fn posterior_var_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = self.point(x);
        (p.var, p.var_grad)
    }

    /// Gradient of `cov(x, y)` with respect to `x`.
    pub fn posterior_cov_grad(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut g = vec![0.0; d];
        self.hyper.kernel.value_grad(x, y, &mut g);
        if self.is_empty() {
            return g;
        }
        let p = self.point(x);
        let kinv_ky = self.chol.solve(&self.k_vector(y));
        let corr = p.dk.transpose() * kinv_ky;
        for i in 0..d {
            g[i] -= corr[i];
        }
        g
    }

    /// Variance at `x_prime` after a hypothetical observation at `x`.
    pub fn lookahead_var(&self, x_prime: &[f64], x: &[f64]) -> f64 {
        let var_p = self.posterior_var(x_prime);
        let denom = self.posterior_var(x) + self.effective_noise();
        if denom <= 0.0 {
            return var_p;
        }
        let c = self.posterior_cov(x_prime, x);
        (var_p - c * c / denom).max(0.0)
    }

    fn whiten(&self, k: &DVector<f64>) -> DVector<f64> {
        self.lower.solve_lower_triangular(k).expect("triangular factor is nonsingular")
    }

    /// Everything the acquisitions need at `x`, with gradients.
    pub fn point(&self, x: &[f64]) -> PointPosterior {
        let n = self.len();
        let d = x.len();
        let kern = &self.hyper.kernel;
        let mut k = DVector::zeros(n);
        let mut dk = DMatrix::zeros(n, d);
        let mut tmp = vec![0.0; d];
        let mut mean = self.hyper.mean_const;
        let mut mean_grad = vec![0.0; d];
        for (j, r) in self.data.rows().enumerate() {
            let v = kern.value_grad(x, r, &mut tmp);
            k[j] = v;
            let a = self.alpha[j];
            mean += a * v;
            for i in 0..d {
                dk[(j, i)] = tmp[i];
                mean_grad[i] += a * tmp[i];
            }
        }
        let s2 = kern.signal_variance();
        if n == 0 {
            return PointPosterior {
                mean,
                var: s2,
                mean_grad,
                var_grad: vec![0.0; d],
                k,
                dk,
                kinv_k: DVector::zeros(0),
            };
        }
        let kinv_k = self.chol.solve(&k);
        let var = (s2 - k.dot(&kinv_k)).max(0.0);
        let vg = dk.transpose() * &kinv_k;
        let var_grad = vg.iter().map(|v| -2.0 * v).collect();
        PointPosterior { mean, var, mean_grad, var_grad, k, dk, kinv_k }
    }
}

/// Negative log marginal likelihood over log-parameters `(s2, Theta, noise)`.
struct NegLogLikelihood<'a> {
    data: &'a Dataset,
    resid: DVector<f64>,
    /// Squared coordinate differences per dimension, `n x n` each.
    sq_diff: Vec<DMatrix<f64>>,
}

impl<'a> NegLogLikelihood<'a> {
    fn new(data: &'a Dataset, m0: f64) -> Self {
        let n = data.len();
        let d = data.dim();
        let sq_diff = (0..d)
            .map(|l| {
                DMatrix::from_fn(n, n, |i, j| {
                    let t = data.row(i)[l] - data.row(j)[l];
                    t * t
                })
            })
            .collect();
        let resid = DVector::from_iterator(n, data.outputs().iter().map(|y| y - m0));
        Self { data, resid, sq_diff }
    }

    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let n = self.data.len();
        let d = self.data.dim();
        let s2 = p[0].exp();
        let theta: Vec<f64> = p[1..=d].iter().map(|v| v.exp()).collect();
        let noise = p[d + 1].exp();
        let kf = DMatrix::from_fn(n, n, |i, j| {
            let q: f64 = (0..d).map(|l| self.sq_diff[l][(i, j)] / theta[l]).sum();
            s2 * (-0.5 * q).exp()
        });
        let mut k = kf.clone();
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let Some(chol) = k.cholesky() else {
            return (f64::INFINITY, vec![0.0; p.len()]);
        };
        let alpha = chol.solve(&self.resid);
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let nll = 0.5 * self.resid.dot(&alpha) + logdet + 0.5 * n as f64 * ln_2pi();

        // dL/dp = 1/2 tr((alpha alpha^T - K^-1) dK/dp); we return -dL/dp.
        let kinv = chol.inverse();
        let mut w = &alpha * alpha.transpose();
        w -= &kinv;
        let mut grad = vec![0.0; p.len()];
        let mut g_s2 = 0.0;
        let mut g_theta = vec![0.0; d];
        let mut trace_w = 0.0;
        for i in 0..n {
            trace_w += w[(i, i)];
            for j in 0..n {
                let wk = w[(i, j)] * kf[(i, j)];
                g_s2 += wk;
                for l in 0..d {
                    g_theta[l] += wk * self.sq_diff[l][(i, j)];
                }
            }
        }
        grad[0] = -0.5 * g_s2;
        for l in 0..d {
            grad[1 + l] = -0.5 * g_theta[l] / (2.0 * theta[l]);
        }
        grad[d + 1] = -0.5 * noise * trace_w;
        (nll, grad)
    }
}
