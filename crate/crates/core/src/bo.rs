//! The sequential Bayesian-optimization loop and its regret metrics.
//!
//! Everything inside the loop works in unit-cube coordinates; objectives own
//! the map back to their native domain.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};

use crate::acquisition::{PreparedAcquisition, Weighting};
use crate::density::{likelihood_mixture, DensitySettings, GaussianMixture};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{lhs, minimize_bounded};
use crate::problem::{Dataset, ExperimentConfig};
use crate::rng::{Purpose, Rng, Streams};
use crate::stats::{running_min, variance};

/// A black-box function on `[0, 1]^d`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Noise-free value at a unit-cube point.
    fn evaluate_unit(&self, u: &[f64]) -> f64;

    /// Output variance that scales the observation noise. `None` means the
    /// loop estimates it from the initial design.
    fn noise_reference_variance(&self) -> Option<f64> {
        None
    }
}

/// Known global minimizers (unit coordinates) and minimum value.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub minimizers_unit: Vec<Vec<f64>>,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Recommended point `argmin mu`, unit coordinates.
    pub recommendation: Vec<f64>,
    pub simple_regret: f64,
    /// Squared unit-cube distance to the nearest true minimizer; NaN without truth.
    pub distance: f64,
    pub observation_regret: f64,
    /// Seconds since the run started.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub data: Dataset,
    /// Set when the run stopped early; the trace holds what was completed.
    pub failure: Option<String>,
    /// Iterations where the likelihood ratio was degenerate and `w = 1` was used.
    pub density_fallbacks: usize,
    pub noise_sd: f64,
}

impl RunOutput {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Running minimum of `values - y_true`.
pub fn simple_regret(values: &[f64], y_true: f64) -> Vec<f64> {
    running_min(&values.iter().map(|v| v - y_true).collect::<Vec<_>>())
}

/// Running minimum over recommendations of the squared distance to the nearest minimizer.
pub fn distance_regret(recommendations: &[Vec<f64>], minimizers: &[Vec<f64>]) -> Vec<f64> {
    let d: Vec<f64> = recommendations.iter().map(|r| nearest_sq_distance(r, minimizers)).collect();
    running_min(&d)
}

/// Running minimum of observed outputs.
pub fn observation_regret(observed: &[f64]) -> Vec<f64> {
    running_min(observed)
}

fn nearest_sq_distance(x: &[f64], minimizers: &[Vec<f64>]) -> f64 {
    minimizers
        .iter()
        .map(|m| m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::NAN, f64::min)
}

/// True when every element is `<=` its predecessor; all-NaN sequences pass.
pub fn is_nonincreasing(xs: &[f64]) -> bool {
    if xs.iter().all(|v| v.is_nan()) {
        return true;
    }
    xs.iter().all(|v| !v.is_nan()) && xs.windows(2).all(|w| w[1] <= w[0])
}

/// One experiment, advanced one iteration at a time.
pub struct BoLoop<'a, O: Objective + ?Sized> {
    config: &'a ExperimentConfig,
    objective: &'a O,
    truth: Option<&'a Truth>,
    streams: Streams,
    noise_rng: Rng,
    data: Dataset,
    model: Option<GpModel>,
    noise_sd: f64,
    iter: usize,
    trace: Vec<TraceRecord>,
    best_value: f64,
    best_distance: f64,
    last_recommendation: Option<Vec<f64>>,
    density_fallbacks: usize,
    started: Instant,
}

impl<'a, O: Objective + ?Sized> BoLoop<'a, O> {
    pub fn new(config: &'a ExperimentConfig, objective: &'a O, truth: Option<&'a Truth>) -> Result<Self> {
        config.validate()?;
        let d = config.dim();
        if objective.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: objective.dim() });
        }
        if config.prior.domain().dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: config.prior.domain().dim() });
        }
        let streams = Streams::new(config.seed, config.repeat);
        Ok(Self {
            config,
            objective,
            truth,
            streams,
            noise_rng: streams.get(Purpose::Noise, 0),
            data: Dataset::new(d),
            model: None,
            noise_sd: 0.0,
            iter: 0,
            trace: Vec::new(),
            best_value: f64::INFINITY,
            best_distance: f64::INFINITY,
            last_recommendation: None,
            density_fallbacks: 0,
            started: Instant::now(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// Evaluates the LHS design, fits the surrogate and records iteration 0.
    pub fn initialize(&mut self) -> Result<()> {
        self.started = Instant::now();
        let d = self.config.dim();
        let design = lhs(self.config.n_init, d, &mut self.streams.get(Purpose::InitialDesign, 0));
        let exact: Vec<f64> = design.points().iter().map(|u| self.objective.evaluate_unit(u)).collect();
        if exact.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("objective returned a non-finite value".into()));
        }
        let var0 = match self.objective.noise_reference_variance() {
            Some(v) => v,
            None => {
                let v = variance(&exact);
                if v > 0.0 { v } else { 1.0 }
            }
        };
        self.noise_sd = (self.config.noise_variance * var0).sqrt();
        for (u, f) in design.points().iter().zip(exact) {
            let y = f + self.noise();
            self.data.push(u, y)?;
        }
        self.refit()?;
        self.record()
    }

    fn noise(&mut self) -> f64 {
        if self.noise_sd == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.noise_rng);
        self.noise_sd * z
    }

    fn refit(&mut self) -> Result<()> {
        let warm = self.model.as_ref().map(|m| m.hyperparams().clone());
        let mut rng = self.streams.get(Purpose::Training, self.iter as u64);
        let (model, _) = GpModel::fit_with(self.data.clone(), &mut rng, warm.as_ref())?;
        self.model = Some(model);
        Ok(())
    }

    fn incumbent(&self) -> Vec<f64> {
        let i = self.data.argmin().expect("initialized dataset");
        self.data.row(i).to_vec()
    }

    fn extra_starts(&self) -> Vec<Vec<f64>> {
        let mut s = vec![self.incumbent()];
        if let Some(r) = &self.last_recommendation {
            s.push(r.clone());
        }
        s
    }

    fn recommend(&mut self) -> Result<Vec<f64>> {
        let model = self.model.as_ref().expect("fitted model");
        let mut rng = self.streams.get(Purpose::Restarts, 2 * self.iter as u64 + 1);
        let res = minimize_bounded(
            |u: &[f64]| model.posterior_mean_grad(u),
            self.config.dim(),
            self.config.rec_restarts(),
            &self.extra_starts(),
            &mut rng,
        )?;
        Ok(res.x)
    }

    fn record(&mut self) -> Result<()> {
        let rec = self.recommend()?;
        let f = self.objective.evaluate_unit(&rec);
        self.best_value = self.best_value.min(f);
        let (y_true, distance) = match self.truth {
            Some(t) => {
                self.best_distance = self.best_distance.min(nearest_sq_distance(&rec, &t.minimizers_unit));
                (t.min_value, self.best_distance)
            }
            None => (0.0, f64::NAN),
        };
        let observed = self.data.outputs().iter().copied().fold(f64::INFINITY, f64::min);
        self.trace.push(TraceRecord {
            iter: self.iter,
            recommendation: rec.clone(),
            simple_regret: self.best_value - y_true,
            distance,
            observation_regret: observed,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        });
        self.last_recommendation = Some(rec);
        Ok(())
    }

    /// Likelihood-ratio mixture for the current surrogate; `None` on a degenerate ratio.
    fn mixture(&mut self) -> Result<Option<GaussianMixture>> {
        let model = self.model.as_ref().expect("fitted model");
        let settings = DensitySettings {
            n_samples_kde: self.config.n_samples_kde,
            n_fit_samples: self.config.n_fit_samples,
            n_gmm: self.config.n_gmm,
        };
        let mut kde_rng = self.streams.get(Purpose::KdeSampling, self.iter as u64);
        let mut fit_rng = self.streams.get(Purpose::GmmInit, self.iter as u64);
        match likelihood_mixture(model, &self.config.prior, &settings, &mut kde_rng, &mut fit_rng) {
            Ok(m) => Ok(Some(m)),
            Err(Error::DegenerateDensity) => {
                self.density_fallbacks += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Chooses the next query, observes it, refits and records the new iteration.
    pub fn step(&mut self) -> Result<()> {
        if self.model.is_none() {
            return Err(Error::InvalidParameter("loop not initialized".into()));
        }
        let spec = self.config.acquisition;
        let mixture = if spec.kind.is_likelihood_weighted() { self.mixture()? } else { None };
        let weighting = match &mixture {
            Some(m) => Weighting::Mixture(m),
            None => Weighting::Unit,
        };
        let best_y = self.data.outputs().iter().copied().fold(f64::INFINITY, f64::min);
        let extra = self.extra_starts();
        let next = {
            let model = self.model.as_ref().expect("fitted model");
            let acq = PreparedAcquisition::new(spec, model, best_y, weighting)?;
            let mut rng = self.streams.get(Purpose::Restarts, 2 * self.iter as u64 + 2);
            minimize_bounded(
                |u: &[f64]| acq.objective(u),
                self.config.dim(),
                self.config.acq_restarts(),
                &extra,
                &mut rng,
            )?
            .x
        };
        let f = self.objective.evaluate_unit(&next);
        if !f.is_finite() {
            return Err(Error::InvalidParameter("objective returned a non-finite value".into()));
        }
        let y = f + self.noise();
        self.data.push(&next, y)?;
        self.iter += 1;
        self.refit()?;
        self.record()
    }

    pub fn finish(self, failure: Option<String>) -> RunOutput {
        RunOutput {
            trace: self.trace,
            data: self.data,
            failure,
            density_fallbacks: self.density_fallbacks,
            noise_sd: self.noise_sd,
        }
    }
}

/// Runs `n_init` design points followed by `n_iter` iterations.
///
/// Failures after the loop is set up end the run early with a partial trace.
pub fn run<O: Objective + ?Sized>(
    config: &ExperimentConfig,
    objective: &O,
    truth: Option<&Truth>,
) -> Result<RunOutput> {
    let mut bo = BoLoop::new(config, objective, truth)?;
    if let Err(e) = bo.initialize() {
        return Ok(bo.finish(Some(e.to_string())));
    }
    for _ in 0..config.n_iter {
        if let Err(e) = bo.step() {
            return Ok(bo.finish(Some(e.to_string())));
        }
    }
    Ok(bo.finish(None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{AcquisitionKind, AcquisitionSpec};
    use crate::problem::{Domain, ObjectiveId};

    struct Quadratic;

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            2
        }

        fn evaluate_unit(&self, u: &[f64]) -> f64 {
            u.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
        }
    }

    fn config(kind: AcquisitionKind, n_iter: usize, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            ObjectiveId { name: "quadratic".into(), dim: 2 },
            Domain::unit_cube(2),
            AcquisitionSpec::new(kind),
        );
        c.n_iter = n_iter;
        c.noise_variance = 0.0;
        c.seed = seed;
        c.n_samples_kde = 5000;
        c.n_fit_samples = 2000;
        c
    }

    fn truth() -> Truth {
        Truth { minimizers_unit: vec![vec![0.5, 0.5]], min_value: 0.0 }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(simple_regret(&[3.0, 1.0, 2.0], 0.0), vec![3.0, 1.0, 1.0]);
        assert_eq!(observation_regret(&[0.5, -0.2, 0.1]), vec![0.5, -0.2, -0.2]);
        let mins = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let recs = vec![vec![0.9, 0.9], vec![0.2, 0.2], vec![1.0, 1.0]];
        let l = distance_regret(&recs, &mins);
        assert!((l[0] - 0.02).abs() < 1e-12);
        assert!((l[1] - 0.02).abs() < 1e-12 && (l[2] - 0.0).abs() < 1e-12);
        assert!(is_nonincreasing(&l));
        assert!(!is_nonincreasing(&[1.0, 2.0]));
        assert!(is_nonincreasing(&[f64::NAN, f64::NAN]));
    }

    #[test]
    fn zero_iterations_records_initial_design() {
        let c = config(AcquisitionKind::Ei, 0, 1);
        let out = run(&c, &Quadratic, Some(&truth())).unwrap();
        assert!(out.is_complete());
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.data.len(), 3);
        let min_y = out.data.outputs().iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(out.trace[0].observation_regret, min_y);
    }

    #[test]
    fn quadratic_is_solved_by_ei() {
        let mut solved = 0;
        for seed in 0..20 {
            let mut c = config(AcquisitionKind::Ei, 15, seed);
            c.n_init = 3;
            let out = run(&c, &Quadratic, Some(&truth())).unwrap();
            assert!(out.is_complete(), "{:?}", out.failure);
            assert_eq!(out.data.len(), 18);
            let last = out.trace.last().unwrap();
            if last.simple_regret <= 1e-2 {
                solved += 1;
            }
            let col = |f: fn(&TraceRecord) -> f64| out.trace.iter().map(f).collect::<Vec<_>>();
            assert!(is_nonincreasing(&col(|r| r.simple_regret)));
            assert!(is_nonincreasing(&col(|r| r.distance)));
            assert!(is_nonincreasing(&col(|r| r.observation_regret)));
            assert!(col(|r| r.simple_regret).iter().all(|r| *r >= 0.0));
        }
        assert!(solved >= 18, "{solved}/20");
    }

    #[test]
    fn runs_are_deterministic() {
        for kind in [AcquisitionKind::LcbLw, AcquisitionKind::IvrLwbo, AcquisitionKind::Pi] {
            let mut c = config(kind, 4, 5);
            c.noise_variance = 1e-3;
            let a = run(&c, &Quadratic, Some(&truth())).unwrap();
            let b = run(&c, &Quadratic, Some(&truth())).unwrap();
            assert_eq!(a.data, b.data);
            let strip = |o: &RunOutput| {
                o.trace.iter().map(|r| (r.recommendation.clone(), r.simple_regret, r.distance)).collect::<Vec<_>>()
            };
            assert_eq!(strip(&a), strip(&b));
        }
    }

    #[test]
    fn every_kind_completes() {
        for kind in AcquisitionKind::ALL {
            let c = config(kind, 3, 9);
            let out = run(&c, &Quadratic, Some(&truth())).unwrap();
            assert!(out.is_complete(), "{kind}: {:?}", out.failure);
            assert_eq!(out.data.len(), c.n_init + 3);
            assert_eq!(out.trace.len(), 4);
            assert!(out.data.within(&Domain::unit_cube(2)));
        }
    }

    #[test]
    fn missing_truth_uses_zero_reference() {
        let c = config(AcquisitionKind::Lcb, 2, 3);
        let out = run(&c, &Quadratic, None).unwrap();
        for r in &out.trace {
            assert!(r.distance.is_nan());
            assert!(r.simple_regret >= 0.0);
        }
    }

    #[test]
    fn noise_scales_with_initial_variance() {
        let mut c = config(AcquisitionKind::Lcb, 0, 4);
        c.n_init = 10;
        c.noise_variance = 1e-3;
        let out = run(&c, &Quadratic, None).unwrap();
        let exact: Vec<f64> = out.data.rows().map(|u| Quadratic.evaluate_unit(u)).collect();
        assert!((out.noise_sd - (1e-3 * variance(&exact)).sqrt()).abs() < 1e-15);
    }
}
