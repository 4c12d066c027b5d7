//! RBF kernel with automatic relevance determination, and its closed-form
//! integrals over `R^d`.
//!
//! `k(x, x') = s2 * exp(-(x - x')^T Theta^-1 (x - x') / 2)` with `Theta`
//! diagonal. Two integrals of kernel products are needed by the variance
//! reduction acquisitions:
//!
//! * `khat(x1, x2) = ∫ k(x1, x') k(x', x2) dx'`
//! * `khat_gauss(x1, x2) = ∫ k(x1, x') k(x', x2) N(x'; w, S) dx'`
//!
//! Both are Gaussian integrals and have exact closed forms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfArd {
    signal_variance: f64,
    /// Diagonal of `Theta` (squared length scales).
    lengthscales: Vec<f64>,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

impl RbfArd {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::InvalidParameter(format!("signal variance {signal_variance}")));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidParameter("length scales must be positive".into()));
        }
        Ok(Self { signal_variance, lengthscales })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    fn check(&self, a: &[f64], b: &[f64]) -> Result<()> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())
    }

    #[inline]
    pub(crate) fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((a, b), l) in x.iter().zip(y).zip(&self.lengthscales) {
            let t = a - b;
            q += t * t / l;
        }
        self.signal_variance * (-0.5 * q).exp()
    }

    /// Writes `d k(x, y) / dx` into `grad` and returns `k(x, y)`.
    #[inline]
    pub(crate) fn value_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.value(x, y);
        for i in 0..x.len() {
            grad[i] = -k * (x[i] - y[i]) / self.lengthscales[i];
        }
        k
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.value(x, y))
    }

    /// Gradient of `k(x, y)` with respect to `x`.
    pub fn grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, y, &mut g);
        Ok(g)
    }

    /// `s2^2 pi^(d/2) |Theta|^(1/2)`, the value of `khat(x, x)`.
    pub fn khat_diag(&self) -> f64 {
        let d = self.dim() as f64;
        let det_sqrt: f64 = self.lengthscales.iter().map(|l| l.sqrt()).product();
        self.signal_variance * self.signal_variance * PI.powf(0.5 * d) * det_sqrt
    }

    #[inline]
    pub(crate) fn khat_value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((a, b), l) in x1.iter().zip(x2).zip(&self.lengthscales) {
            let t = a - b;
            q += t * t / l;
        }
        self.khat_diag() * (-0.25 * q).exp()
    }

    #[inline]
    pub(crate) fn khat_value_grad(&self, x1: &[f64], x2: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.khat_value(x1, x2);
        for i in 0..x1.len() {
            grad[i] = -v * (x1[i] - x2[i]) / (2.0 * self.lengthscales[i]);
        }
        v
    }

    /// `∫ k(x1, x') k(x', x2) dx'` over `R^d`.
    pub fn khat(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check(x1, x2)?;
        Ok(self.khat_value(x1, x2))
    }

    /// Gradient of [`RbfArd::khat`] with respect to `x1`.
    pub fn khat_grad(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
        self.check(x1, x2)?;
        let mut g = vec![0.0; x1.len()];
        self.khat_value_grad(x1, x2, &mut g);
        Ok(g)
    }

    /// `∫ k(x1, x') k(x', x2) N(x'; mean, cov) dx'` over `R^d`.
    pub fn khat_gauss(&self, x1: &[f64], x2: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
        self.check(x1, x2)?;
        Ok(GaussKernelIntegral::new(self, mean, cov)?.value(x1, x2))
    }

    /// Gradient of [`RbfArd::khat_gauss`] with respect to `x1`.
    pub fn khat_gauss_grad(
        &self,
        x1: &[f64],
        x2: &[f64],
        mean: &[f64],
        cov: &DMatrix<f64>,
    ) -> Result<Vec<f64>> {
        self.check(x1, x2)?;
        let mut g = vec![0.0; x1.len()];
        GaussKernelIntegral::new(self, mean, cov)?.value_grad(x1, x2, &mut g);
        Ok(g)
    }
}

/// Precomputed Gaussian-weighted kernel integral for one mixture component.
///
/// With `r = x1 + x2 - 2 w`:
///
/// `khat_gauss = s2^2 |I + 2 S Theta^-1|^(-1/2)
///               exp(-(x1 - x2)^T (4 Theta)^-1 (x1 - x2))
///               exp(-r^T (2 Theta + 4 S)^-1 r / 2)`
#[derive(Debug, Clone)]
pub struct GaussKernelIntegral {
    scale: f64,
    lengthscales: Vec<f64>,
    twice_mean: Vec<f64>,
    precision: Precision,
}

#[derive(Debug, Clone)]
enum Precision {
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl GaussKernelIntegral {
    pub fn new(kernel: &RbfArd, mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = kernel.dim();
        check_dim(d, mean.len())?;
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        let theta = &kernel.lengthscales;
        let s2 = kernel.signal_variance;
        let twice_mean: Vec<f64> = mean.iter().map(|m| 2.0 * m).collect();

        let is_diag = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        if is_diag {
            if (0..d).any(|i| !(cov[(i, i)] > 0.0)) {
                return Err(Error::NotPositiveDefinite("mixture covariance"));
            }
            // |I + 2 S Theta^-1| = prod (1 + 2 s_i / theta_i)
            let det: f64 = (0..d).map(|i| 1.0 + 2.0 * cov[(i, i)] / theta[i]).product();
            let prec = (0..d).map(|i| 1.0 / (2.0 * theta[i] + 4.0 * cov[(i, i)])).collect();
            return Ok(Self {
                scale: s2 * s2 / det.sqrt(),
                lengthscales: theta.clone(),
                twice_mean,
                precision: Precision::Diagonal(prec),
            });
        }

        if !is_symmetric(cov) || cov.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("mixture covariance"));
        }
        // |I + 2 S Theta^-1| = |Theta + 2 S| / |Theta|, and Theta + 2 S is SPD.
        let mut m = cov * 2.0;
        for i in 0..d {
            m[(i, i)] += theta[i];
        }
        let chol = m.cholesky().ok_or(Error::NotPositiveDefinite("Theta + 2 Sigma"))?;
        let log_det_m: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_det_theta: f64 = theta.iter().map(|t| t.ln()).sum();
        let scale = s2 * s2 * (-0.5 * (log_det_m - log_det_theta)).exp();
        // (2 Theta + 4 S)^-1 = (Theta + 2 S)^-1 / 2
        let prec = chol.inverse() * 0.5;
        Ok(Self {
            scale,
            lengthscales: theta.clone(),
            twice_mean,
            precision: Precision::Full(prec),
        })
    }

    #[inline]
    fn exponent_and_pr(&self, x1: &[f64], x2: &[f64], pr: &mut [f64]) -> f64 {
        let d = x1.len();
        let mut q = 0.0;
        for i in 0..d {
            let t = x1[i] - x2[i];
            q += 0.25 * t * t / self.lengthscales[i];
        }
        match &self.precision {
            Precision::Diagonal(p) => {
                for i in 0..d {
                    let r = x1[i] + x2[i] - self.twice_mean[i];
                    pr[i] = p[i] * r;
                    q += 0.5 * r * pr[i];
                }
            }
            Precision::Full(p) => {
                let r: Vec<f64> = (0..d).map(|i| x1[i] + x2[i] - self.twice_mean[i]).collect();
                for i in 0..d {
                    pr[i] = (0..d).map(|j| p[(i, j)] * r[j]).sum();
                }
                q += 0.5 * r.iter().zip(pr.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        q
    }

    pub fn value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let mut pr = vec![0.0; x1.len()];
        self.scale * (-self.exponent_and_pr(x1, x2, &mut pr)).exp()
    }

    /// Writes the gradient with respect to `x1` into `grad` and returns the value.
    pub fn value_grad(&self, x1: &[f64], x2: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.scale * (-self.exponent_and_pr(x1, x2, grad)).exp();
        for i in 0..x1.len() {
            grad[i] = -v * ((x1[i] - x2[i]) / (2.0 * self.lengthscales[i]) + grad[i]);
        }
        v
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * (m[(i, j)].abs() + m[(j, i)].abs() + 1e-300)))
}
