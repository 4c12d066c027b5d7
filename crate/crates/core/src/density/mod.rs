//! Likelihood-ratio weights `w(u) = p_u(u) / p_mu(mu(u))` and their Gaussian-mixture fit.
//!
//! All points live in unit-cube coordinates.

mod gmm;
mod kde;

use rayon::prelude::*;

pub use gmm::{weighted_em, EmFit, EmOptions, GaussianMixture};
pub use kde::{kde_1d, kde_1d_with, silverman_bandwidth, Kde1d, DEFAULT_GRID_SIZE, FLOOR_RATIO};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::problem::InputPrior;

/// Anything with a scalar mean over unit coordinates.
pub trait MeanFunction: Sync {
    fn mean(&self, u: &[f64]) -> f64;
}

impl MeanFunction for GpModel {
    fn mean(&self, u: &[f64]) -> f64 {
        self.posterior_mean(u)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> MeanFunction for F {
    fn mean(&self, u: &[f64]) -> f64 {
        self(u)
    }
}

/// Draws `n` points from the prior sequentially, then evaluates `mu` on them in parallel.
fn prior_points<R: rand::Rng + ?Sized>(prior: &InputPrior, n: usize, rng: &mut R) -> Vec<f64> {
    let d = prior.domain().dim();
    let mut flat = Vec::with_capacity(n * d);
    for _ in 0..n {
        flat.extend(prior.sample_unit(rng));
    }
    flat
}

pub fn sample_mu<M, R>(mean: &M, prior: &InputPrior, n_samples: usize, rng: &mut R) -> Result<Vec<f64>>
where
    M: MeanFunction + ?Sized,
    R: rand::Rng + ?Sized,
{
    if n_samples < kde::MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {} posterior-mean samples",
            kde::MIN_SAMPLES
        )));
    }
    let d = prior.domain().dim();
    let flat = prior_points(prior, n_samples, rng);
    Ok(flat.par_chunks(d).map(|u| mean.mean(u)).collect())
}

pub struct LikelihoodRatio<'a, M: ?Sized> {
    mean: &'a M,
    prior: &'a InputPrior,
    kde: &'a Kde1d,
    p_min: f64,
}

impl<'a, M: MeanFunction + ?Sized> LikelihoodRatio<'a, M> {
    pub fn new(mean: &'a M, prior: &'a InputPrior, kde: &'a Kde1d) -> Self {
        Self { mean, prior, kde, p_min: kde.p_min() }
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let pu = self.prior.unit_density(u);
        if pu == 0.0 {
            return 0.0;
        }
        pu / self.kde.eval(self.mean.mean(u)).max(self.p_min)
    }
}

/// Samples `w` at prior draws and fits a weighted-EM mixture to it.
///
/// The mixture's total mass is the importance estimate of `int w du`.
pub fn fit_gmm<W, R>(
    w: &W,
    prior: &InputPrior,
    n_gmm: usize,
    n_fit_samples: usize,
    rng: &mut R,
) -> Result<(GaussianMixture, EmFit)>
where
    W: Fn(&[f64]) -> f64 + Sync + ?Sized,
    R: rand::Rng + ?Sized,
{
    if n_gmm == 0 {
        return Err(Error::InvalidParameter("n_gmm must be at least 1".into()));
    }
    if n_fit_samples == 0 {
        return Err(Error::InvalidParameter("n_fit_samples must be positive".into()));
    }
    let d = prior.domain().dim();
    let flat = prior_points(prior, n_fit_samples, rng);
    let evals: Vec<(f64, f64)> =
        flat.par_chunks(d).map(|u| (w(u), prior.unit_density(u))).collect();
    let weights: Vec<f64> = evals.iter().map(|e| e.0).collect();
    if weights.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::DegenerateDensity);
    }
    let ratio_mean =
        evals.iter().map(|(wv, pu)| if *pu > 0.0 { wv / pu } else { 0.0 }).sum::<f64>()
            / n_fit_samples as f64;
    let total_mass = prior.domain_mass() * ratio_mean;
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(Error::DegenerateDensity);
    }

    let points: Vec<Vec<f64>> = flat.chunks(d).map(|c| c.to_vec()).collect();
    let fit = weighted_em(&points, &weights, n_gmm, &EmOptions::default(), rng)?;
    let mix = GaussianMixture::new(
        fit.weights.clone(),
        fit.means.clone(),
        fit.covariances.clone(),
        total_mass,
    )?;
    Ok((mix, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DensitySettings {
    pub n_samples_kde: usize,
    pub n_fit_samples: usize,
    pub n_gmm: usize,
}

impl Default for DensitySettings {
    fn default() -> Self {
        Self { n_samples_kde: 100_000, n_fit_samples: 10_000, n_gmm: 2 }
    }
}

/// Full pipeline: sample `mu`, KDE, likelihood ratio, mixture fit.
///
/// Returns `Error::DegenerateDensity` when `mu` is (numerically) constant.
pub fn likelihood_mixture<M, R1, R2>(
    mean: &M,
    prior: &InputPrior,
    settings: &DensitySettings,
    kde_rng: &mut R1,
    fit_rng: &mut R2,
) -> Result<GaussianMixture>
where
    M: MeanFunction + ?Sized,
    R1: rand::Rng + ?Sized,
    R2: rand::Rng + ?Sized,
{
    let samples = sample_mu(mean, prior, settings.n_samples_kde, kde_rng)?;
    let kde = kde_1d(&samples)?;
    let ratio = LikelihoodRatio::new(mean, prior, &kde);
    let (mix, _) = fit_gmm(&|u: &[f64]| ratio.eval(u), prior, settings.n_gmm, settings.n_fit_samples, fit_rng)?;
    Ok(mix)
}
