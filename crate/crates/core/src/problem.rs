//! Search domains, observed data, input priors and experiment settings.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionSpec;
use crate::error::{Error, Result};
use crate::stats::{ln_2pi, norm_cdf};

const DOMAIN_SLACK: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidDomain(format!("bounds [{l}, {u}] in dimension {i}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit_cube(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - DOMAIN_SLACK && *v <= u + DOMAIN_SLACK)
    }

    /// Affine map of `x` into `[0, 1]^d`.
    pub fn rescale_to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain);
        }
        Ok(x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| ((v - l) / (u - l)).clamp(0.0, 1.0))
            .collect())
    }

    /// Inverse of [`Domain::rescale_to_unit`].
    pub fn unrescale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }
}

/// Observed inputs (row-major `n x d`) and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self { dim, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>], outputs: Vec<f64>) -> Result<Self> {
        if rows.len() != outputs.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: outputs.len() });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Self::new(dim);
        for (row, y) in rows.iter().zip(outputs) {
            data.push(row, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if self.outputs.is_empty() && self.dim == 0 {
            self.dim = x.len();
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        self.inputs.extend_from_slice(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim.max(1))
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Index of the smallest output (first one on ties).
    pub fn argmin(&self) -> Option<usize> {
        (0..self.len()).reduce(|a, b| if self.outputs[b] < self.outputs[a] { b } else { a })
    }

    pub fn within(&self, domain: &Domain) -> bool {
        domain.dim() == self.dim && self.rows().all(|r| domain.contains(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorKind {
    Uniform,
    /// Zero-mean Gaussian with the given per-axis variances.
    GaussianDiagonal(Vec<f64>),
}

/// Input density `p_x` over a domain.
///
/// The Gaussian prior is evaluated unnormalized on the domain: its density
/// is the full normal pdf, and samples are drawn from the normal truncated
/// to the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPrior {
    domain: Domain,
    kind: PriorKind,
}

impl InputPrior {
    pub fn uniform(domain: Domain) -> Self {
        Self { domain, kind: PriorKind::Uniform }
    }

    pub fn gaussian_diagonal(domain: Domain, variances: Vec<f64>) -> Result<Self> {
        if variances.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: variances.len() });
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("prior variances must be positive".into()));
        }
        Ok(Self { domain, kind: PriorKind::GaussianDiagonal(variances) })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    /// Density in original coordinates.
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PriorKind::Uniform => {
                if self.domain.contains(x) {
                    1.0 / self.domain.volume()
                } else {
                    0.0
                }
            }
            PriorKind::GaussianDiagonal(var) => {
                let log = x
                    .iter()
                    .zip(var)
                    .map(|(v, s2)| -0.5 * (v * v / s2 + s2.ln() + ln_2pi()))
                    .sum::<f64>();
                log.exp()
            }
        }
    }

    /// Density pulled back to unit-cube coordinates (zero outside the cube).
    pub fn unit_density(&self, u: &[f64]) -> f64 {
        if !u.iter().all(|v| (-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(v)) {
            return 0.0;
        }
        match &self.kind {
            PriorKind::Uniform => 1.0,
            PriorKind::GaussianDiagonal(_) => {
                self.density(&self.domain.unrescale(u)) * self.domain.volume()
            }
        }
    }

    /// Probability mass of the (untruncated) prior inside the domain.
    pub fn domain_mass(&self) -> f64 {
        match &self.kind {
            PriorKind::Uniform => 1.0,
            PriorKind::GaussianDiagonal(var) => var
                .iter()
                .enumerate()
                .map(|(i, s2)| {
                    let s = s2.sqrt();
                    norm_cdf(self.domain.upper[i] / s) - norm_cdf(self.domain.lower[i] / s)
                })
                .product(),
        }
    }

    /// Draw one point from the prior restricted to the domain, in unit coordinates.
    pub fn sample_unit<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.domain.dim();
        match &self.kind {
            PriorKind::Uniform => (0..d).map(|_| rng.random::<f64>()).collect(),
            PriorKind::GaussianDiagonal(var) => {
                // Per-axis rejection; the box is axis-aligned and the prior factorizes.
                (0..d)
                    .map(|i| {
                        let s = var[i].sqrt();
                        let (lo, hi) = (self.domain.lower[i], self.domain.upper[i]);
                        loop {
                            let z: f64 = StandardNormal.sample(rng);
                            let x = s * z;
                            if x >= lo && x <= hi {
                                break (x - lo) / (hi - lo);
                            }
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Which objective an experiment targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveId {
    pub name: String,
    pub dim: usize,
}

/// Settings of one Bayesian-optimization experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub objective: ObjectiveId,
    pub domain: Domain,
    pub n_init: usize,
    pub n_iter: usize,
    pub acquisition: AcquisitionSpec,
    /// Observation noise variance before rescaling by the output variance.
    pub noise_variance: f64,
    pub n_gmm: usize,
    pub n_samples_kde: usize,
    pub n_fit_samples: usize,
    pub seed: u64,
    /// Repeat index; selects a disjoint family of random streams.
    pub repeat: u64,
    pub prior: InputPrior,
    /// Restarts for acquisition minimization; `None` means `10 d`.
    pub acq_restarts: Option<usize>,
    /// Restarts for the posterior-mean recommendation; `None` means `20 d`.
    pub rec_restarts: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(objective: ObjectiveId, domain: Domain, acquisition: AcquisitionSpec) -> Self {
        let d = domain.dim();
        Self {
            objective,
            prior: InputPrior::uniform(domain.clone()),
            domain,
            n_init: if d == 2 { 3 } else { 10 },
            n_iter: 20,
            acquisition,
            noise_variance: 1e-3,
            n_gmm: 2,
            n_samples_kde: 100_000,
            n_fit_samples: 10_000,
            seed: 0,
            repeat: 0,
            acq_restarts: None,
            rec_restarts: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init < 1 {
            return Err(Error::InvalidParameter("n_init must be at least 1".into()));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be nonnegative".into()));
        }
        if self.n_gmm < 1 {
            return Err(Error::InvalidParameter("n_gmm must be at least 1".into()));
        }
        if self.n_samples_kde < 100 || self.n_fit_samples < 10 {
            return Err(Error::InvalidParameter("too few density samples".into()));
        }
        if self.prior.domain() != &self.domain {
            return Err(Error::InvalidParameter("prior domain differs from search domain".into()));
        }
        if self.objective.dim != self.domain.dim() {
            return Err(Error::DimensionMismatch { expected: self.domain.dim(), got: self.objective.dim });
        }
        self.acquisition.validate()
    }

    pub fn acq_restarts(&self) -> usize {
        self.acq_restarts.unwrap_or(10 * self.dim())
    }

    pub fn rec_restarts(&self) -> usize {
        self.rec_restarts.unwrap_or(20 * self.dim())
    }
}
