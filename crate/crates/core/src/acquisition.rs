//! Acquisition functions with analytic gradients.
//!
//! Closed-form rules (PI, EI, LCB, LCB-LW) and integral rules (IVR, IVR-BO,
//! IVR-LW, IVR-LWBO) share one prepared evaluator. Integral rules cache the
//! `K^-1 Khat K^-1` product once per surrogate and mixture.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::GaussianMixture;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernel::GaussKernelIntegral;
use crate::stats::{norm_cdf, norm_pdf};

/// Variance below which the closed-form rules switch to their `sigma = 0` limits.
const VAR_LIMIT: f64 = 1e-20;
/// Floor on the IVR denominator.
const IVR_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionKind {
    Pi,
    Ei,
    Lcb,
    LcbLw,
    Ivr,
    IvrBo,
    IvrLw,
    IvrLwbo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Minimize,
    Maximize,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 8] = [
        AcquisitionKind::Pi,
        AcquisitionKind::Ei,
        AcquisitionKind::Lcb,
        AcquisitionKind::LcbLw,
        AcquisitionKind::Ivr,
        AcquisitionKind::IvrBo,
        AcquisitionKind::IvrLw,
        AcquisitionKind::IvrLwbo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::Pi => "pi",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Lcb => "lcb",
            AcquisitionKind::LcbLw => "lcb-lw",
            AcquisitionKind::Ivr => "ivr",
            AcquisitionKind::IvrBo => "ivr-bo",
            AcquisitionKind::IvrLw => "ivr-lw",
            AcquisitionKind::IvrLwbo => "ivr-lwbo",
        }
    }

    pub fn rule(self) -> Rule {
        match self {
            AcquisitionKind::Pi
            | AcquisitionKind::Ei
            | AcquisitionKind::Ivr
            | AcquisitionKind::IvrLw => Rule::Maximize,
            AcquisitionKind::Lcb
            | AcquisitionKind::LcbLw
            | AcquisitionKind::IvrBo
            | AcquisitionKind::IvrLwbo => Rule::Minimize,
        }
    }

    pub fn is_likelihood_weighted(self) -> bool {
        matches!(self, AcquisitionKind::LcbLw | AcquisitionKind::IvrLw | AcquisitionKind::IvrLwbo)
    }

    pub fn is_integral(self) -> bool {
        matches!(
            self,
            AcquisitionKind::Ivr
                | AcquisitionKind::IvrBo
                | AcquisitionKind::IvrLw
                | AcquisitionKind::IvrLwbo
        )
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        AcquisitionKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown acquisition `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Exploration margin for PI and EI.
    pub xi: f64,
    /// Trade-off weight for the LCB and IVR families.
    pub kappa: f64,
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind) -> Self {
        Self { kind, xi: 0.01, kappa: 1.0 }
    }

    pub fn rule(&self) -> Rule {
        self.kind.rule()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::InvalidParameter("xi must be nonnegative".into()));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidParameter("kappa must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Sampling weight seen by the likelihood-weighted rules.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// No weight supplied; likelihood-weighted rules refuse to evaluate.
    Absent,
    /// `w = 1`: LCB-LW reduces to LCB and IVR-LW to IVR.
    Unit,
    Mixture(&'a GaussianMixture),
}

impl<'a> From<Option<&'a GaussianMixture>> for Weighting<'a> {
    fn from(m: Option<&'a GaussianMixture>) -> Self {
        m.map_or(Weighting::Absent, Weighting::Mixture)
    }
}

enum KhatTerm {
    Plain,
    Gauss(GaussKernelIntegral),
}

struct IntegralCache {
    /// `(beta_t, term_t)`.
    terms: Vec<(f64, KhatTerm)>,
    /// `sum_t beta_t khat_t(x, x)` when it does not depend on `x`.
    plain_diag: f64,
    /// `K^-1 (sum_t beta_t Khat_t(X, X)) K^-1`.
    a: DMatrix<f64>,
}

/// Acquisition bound to one surrogate, incumbent and weighting.
pub struct PreparedAcquisition<'a> {
    spec: AcquisitionSpec,
    model: &'a GpModel,
    best_y: f64,
    mixture: Option<&'a GaussianMixture>,
    integral: Option<IntegralCache>,
}

impl<'a> PreparedAcquisition<'a> {
    pub fn new(
        spec: AcquisitionSpec,
        model: &'a GpModel,
        best_y: f64,
        weighting: Weighting<'a>,
    ) -> Result<Self> {
        spec.validate()?;
        let mixture = match weighting {
            Weighting::Mixture(m) => {
                if m.dim() != model.dim() {
                    return Err(Error::DimensionMismatch { expected: model.dim(), got: m.dim() });
                }
                Some(m)
            }
            Weighting::Unit => None,
            Weighting::Absent if spec.kind.is_likelihood_weighted() => {
                return Err(Error::MissingMixture)
            }
            Weighting::Absent => None,
        };
        let mixture = if spec.kind.is_likelihood_weighted() { mixture } else { None };
        let integral = if spec.kind.is_integral() {
            Some(build_cache(model, mixture)?)
        } else {
            None
        };
        Ok(Self { spec, model, best_y, mixture, integral })
    }

    pub fn spec(&self) -> &AcquisitionSpec {
        &self.spec
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_grad(x).0
    }

    /// Acquisition value and gradient, in the rule's own orientation.
    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = self.model.point(x);
        let d = x.len();
        let kappa = self.spec.kappa;
        match self.spec.kind {
            AcquisitionKind::Pi | AcquisitionKind::Ei => {
                let gap = self.best_y - p.mean - self.spec.xi;
                if p.var <= VAR_LIMIT {
                    return if self.spec.kind == AcquisitionKind::Pi {
                        (if gap > 0.0 { 1.0 } else { 0.0 }, vec![0.0; d])
                    } else if gap > 0.0 {
                        (gap, p.mean_grad.iter().map(|g| -g).collect())
                    } else {
                        (0.0, vec![0.0; d])
                    };
                }
                let s = p.var.sqrt();
                let ds: Vec<f64> = p.var_grad.iter().map(|g| g / (2.0 * s)).collect();
                let lam = gap / s;
                let (cdf, pdf) = (norm_cdf(lam), norm_pdf(lam));
                if self.spec.kind == AcquisitionKind::Pi {
                    let g = (0..d).map(|i| pdf * (-p.mean_grad[i] - lam * ds[i]) / s).collect();
                    (cdf, g)
                } else {
                    let v = gap * cdf + s * pdf;
                    let g = (0..d).map(|i| -cdf * p.mean_grad[i] + pdf * ds[i]).collect();
                    (v.max(0.0), g)
                }
            }
            AcquisitionKind::Lcb | AcquisitionKind::LcbLw => {
                let s = p.var.sqrt();
                let ds: Vec<f64> = if s > 0.0 {
                    p.var_grad.iter().map(|g| g / (2.0 * s)).collect()
                } else {
                    vec![0.0; d]
                };
                let (w, dw) = match self.mixture {
                    Some(m) if self.spec.kind == AcquisitionKind::LcbLw => m.evaluate_grad(x),
                    _ => (1.0, vec![0.0; d]),
                };
                let v = p.mean - kappa * s * w;
                let g = (0..d).map(|i| p.mean_grad[i] - kappa * (w * ds[i] + s * dw[i])).collect();
                (v, g)
            }
            AcquisitionKind::Ivr | AcquisitionKind::IvrLw => self.ivr(x, &p),
            AcquisitionKind::IvrBo | AcquisitionKind::IvrLwbo => {
                let (a, ga) = self.ivr(x, &p);
                let g = (0..d).map(|i| p.mean_grad[i] - kappa * ga[i]).collect();
                (p.mean - kappa * a, g)
            }
        }
    }

    /// Value and gradient of the quantity the optimizer minimizes.
    pub fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.value_grad(x);
        match self.spec.rule() {
            Rule::Minimize => (v, g),
            Rule::Maximize => (-v, g.into_iter().map(|v| -v).collect()),
        }
    }

    fn ivr(&self, x: &[f64], p: &crate::gp::PointPosterior) -> (f64, Vec<f64>) {
        let cache = self.integral.as_ref().expect("integral cache for IVR kinds");
        let d = x.len();
        let n = self.model.len();
        let mut num = cache.plain_diag;
        let mut dnum = vec![0.0; d];
        let mut h = DVector::zeros(n);
        let mut jh = DMatrix::zeros(n, d);
        let mut tmp = vec![0.0; d];
        let kern = self.model.kernel();
        for (beta, term) in &cache.terms {
            match term {
                KhatTerm::Plain => {
                    for (j, r) in self.model.data().rows().enumerate() {
                        h[j] += beta * kern.khat_value_grad(x, r, &mut tmp);
                        for c in 0..d {
                            jh[(j, c)] += beta * tmp[c];
                        }
                    }
                }
                KhatTerm::Gauss(gk) => {
                    num += beta * gk.value_grad(x, x, &mut tmp);
                    for c in 0..d {
                        dnum[c] += 2.0 * beta * tmp[c];
                    }
                    for (j, r) in self.model.data().rows().enumerate() {
                        h[j] += beta * gk.value_grad(x, r, &mut tmp);
                        for c in 0..d {
                            jh[(j, c)] += beta * tmp[c];
                        }
                    }
                }
            }
        }
        if n > 0 {
            let ak = &cache.a * &p.k;
            let kinv_h = self.model.cholesky().solve(&h);
            num += p.k.dot(&ak) - 2.0 * p.kinv_k.dot(&h);
            let t1 = p.dk.transpose() * &ak;
            let t2 = p.dk.transpose() * &kinv_h;
            let t3 = jh.transpose() * &p.kinv_k;
            for c in 0..d {
                dnum[c] += 2.0 * t1[c] - 2.0 * (t2[c] + t3[c]);
            }
        }
        if num < 0.0 {
            num = 0.0;
            dnum.iter_mut().for_each(|v| *v = 0.0);
        }
        if p.var < IVR_VAR_FLOOR {
            let v = num / IVR_VAR_FLOOR;
            return (v, dnum.iter().map(|g| g / IVR_VAR_FLOOR).collect());
        }
        let s2 = p.var;
        let g = (0..d).map(|c| (dnum[c] * s2 - num * p.var_grad[c]) / (s2 * s2)).collect();
        (num / s2, g)
    }
}

fn build_cache(model: &GpModel, mixture: Option<&GaussianMixture>) -> Result<IntegralCache> {
    let kern = model.kernel();
    let terms: Vec<(f64, KhatTerm)> = match mixture {
        None => vec![(1.0, KhatTerm::Plain)],
        Some(m) => m
            .betas()
            .into_iter()
            .zip(m.means().iter().zip(m.covariances()))
            .map(|(b, (mean, cov))| Ok((b, KhatTerm::Gauss(GaussKernelIntegral::new(kern, mean, cov)?))))
            .collect::<Result<_>>()?,
    };
    let plain_diag = if mixture.is_none() { kern.khat_diag() } else { 0.0 };
    let n = model.len();
    let mut hat = DMatrix::zeros(n, n);
    let rows: Vec<&[f64]> = model.data().rows().collect();
    for (beta, term) in &terms {
        for i in 0..n {
            for j in 0..=i {
                let v = beta
                    * match term {
                        KhatTerm::Plain => kern.khat_value(rows[i], rows[j]),
                        KhatTerm::Gauss(gk) => gk.value(rows[i], rows[j]),
                    };
                hat[(i, j)] += v;
                if i != j {
                    hat[(j, i)] += v;
                }
            }
        }
    }
    let a = if n == 0 {
        hat
    } else {
        let chol = model.cholesky();
        let kinv_h = chol.solve(&hat);
        let a = chol.solve(&kinv_h.transpose());
        0.5 * (&a + a.transpose())
    };
    Ok(IntegralCache { terms, plain_diag, a })
}

/// One-shot evaluation of PI, EI, LCB or LCB-LW.
pub fn eval_closed(
    spec: &AcquisitionSpec,
    model: &GpModel,
    x: &[f64],
    best_y: f64,
    mixture: Option<&GaussianMixture>,
) -> Result<(f64, Vec<f64>)> {
    if spec.kind.is_integral() {
        return Err(Error::InvalidParameter(format!("{} is an integral rule", spec.kind)));
    }
    check_point(model, x)?;
    Ok(PreparedAcquisition::new(*spec, model, best_y, mixture.into())?.value_grad(x))
}

/// One-shot evaluation of IVR, IVR-BO, IVR-LW or IVR-LWBO.
pub fn eval_integral(
    spec: &AcquisitionSpec,
    model: &GpModel,
    x: &[f64],
    mixture: Option<&GaussianMixture>,
) -> Result<(f64, Vec<f64>)> {
    if !spec.kind.is_integral() {
        return Err(Error::InvalidParameter(format!("{} is a closed-form rule", spec.kind)));
    }
    check_point(model, x)?;
    Ok(PreparedAcquisition::new(*spec, model, f64::NAN, mixture.into())?.value_grad(x))
}

fn check_point(model: &GpModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    Ok(())
}

/// Monte Carlo estimate of `int lookahead_var(x', x) w(x') dx'` with uniform
/// draws over `[lo, hi]`. Returns the estimate and its standard error.
#[cfg(test)]
pub(crate) fn a_b_oracle<R: rand::Rng + ?Sized>(
    model: &GpModel,
    x: &[f64],
    w: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    n_mc: usize,
    rng: &mut R,
) -> (f64, f64) {
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut xp = vec![0.0; x.len()];
    for _ in 0..n_mc {
        for i in 0..x.len() {
            xp[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
        }
        let v = vol * model.lookahead_var(&xp, x) * w(&xp);
        sum += v;
        sum2 += v * v;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}
