//! Synthetic test functions with known minima.
//!
//! Domains and reference minima come from a checked-in fixture file produced
//! by `examples/derive_fixtures.rs`. Set `OWBO_FIXTURES` to load a different
//! file at runtime.

use std::f64::consts::{E, PI};

use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::bo::{Objective, Truth};
use crate::density::{kde_1d, Kde1d};
use crate::error::{Error, Result};
use crate::optim::lhs;
use crate::problem::Domain;
use crate::rng::{Purpose, Rng, Streams};
use crate::stats::variance;

const EMBEDDED_FIXTURES: &str = include_str!("../fixtures/benchmarks.toml");
pub const FIXTURES_ENV: &str = "OWBO_FIXTURES";

/// Probes used to estimate the output variance that scales observation noise.
pub const N_VARIANCE_PROBES: usize = 1000;
const PROBE_SEED: u64 = 0x7072_6f62;

pub fn ackley(x: &[f64]) -> f64 {
    const A: f64 = 20.0;
    const B: f64 = 0.2;
    const C: f64 = 2.0 * PI;
    let d = x.len() as f64;
    let r = (x.iter().map(|v| v * v).sum::<f64>() / d).sqrt();
    let c = x.iter().map(|v| (C * v).cos()).sum::<f64>() / d;
    // Grouped so that f(0) is exactly zero.
    (A - A * (-B * r).exp()) + (E - c.exp())
}

pub fn branin(x: &[f64]) -> f64 {
    let a = 1.0;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    let q = x[1] - b * x[0] * x[0] + c * x[0] - r;
    a * q * q + s * (1.0 - t) * x[0].cos() + s
}

pub fn bukin(x: &[f64]) -> f64 {
    100.0 * (x[1] - 0.01 * x[0].powi(2)).abs().sqrt() + 0.01 * (x[0] + 10.0).abs()
}

/// Michalewicz with steepness `m = 10`.
pub fn michalewicz(x: &[f64]) -> f64 {
    const TWO_M: i32 = 20;
    -x.iter()
        .enumerate()
        .map(|(i, v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powi(TWO_M))
        .sum::<f64>()
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn hartmann6(x: &[f64]) -> f64 {
    -HARTMANN_ALPHA
        .iter()
        .zip(HARTMANN_A.iter().zip(&HARTMANN_P))
        .map(|(alpha, (a, p))| {
            let e: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
            alpha * (-e).exp()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Ackley,
    Branin,
    Bukin,
    Michalewicz,
    Hartmann6,
}

impl Function {
    pub const ALL: [Function; 5] =
        [Function::Ackley, Function::Branin, Function::Bukin, Function::Michalewicz, Function::Hartmann6];

    pub fn name(self) -> &'static str {
        match self {
            Function::Ackley => "ackley",
            Function::Branin => "branin",
            Function::Bukin => "bukin",
            Function::Michalewicz => "michalewicz",
            Function::Hartmann6 => "hartmann6",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ackley" => Ok(Function::Ackley),
            "branin" => Ok(Function::Branin),
            "bukin" | "bukin6" => Ok(Function::Bukin),
            "michalewicz" => Ok(Function::Michalewicz),
            "hartmann6" | "hartmann" => Ok(Function::Hartmann6),
            _ => Err(Error::UnknownBenchmark(name.to_string())),
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Function::Ackley => ackley(x),
            Function::Branin => branin(x),
            Function::Bukin => bukin(x),
            Function::Michalewicz => michalewicz(x),
            Function::Hartmann6 => hartmann6(x),
        }
    }

    /// Dimension the function is defined for, or `None` if any `d >= 1` works.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            Function::Branin | Function::Bukin => Some(2),
            Function::Hartmann6 => Some(6),
            Function::Ackley | Function::Michalewicz => None,
        }
    }
}

/// One entry of the fixture file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub min_value: f64,
    pub minimizers: Vec<Vec<f64>>,
    pub domain_source: String,
    pub oracle: String,
}

#[derive(Deserialize)]
struct FixtureFile {
    benchmark: Vec<Fixture>,
}

pub fn parse_fixtures(text: &str) -> Result<Vec<Fixture>> {
    let file: FixtureFile = toml::from_str(text).map_err(|e| Error::Fixture(e.to_string()))?;
    for f in &file.benchmark {
        let ok = f.lower.len() == f.dim
            && f.upper.len() == f.dim
            && !f.minimizers.is_empty()
            && f.minimizers.iter().all(|m| m.len() == f.dim);
        if !ok {
            return Err(Error::Fixture(format!("inconsistent dimensions in entry {} (d={})", f.name, f.dim)));
        }
    }
    Ok(file.benchmark)
}

/// Fixtures from `$OWBO_FIXTURES` if set, otherwise the embedded copy.
pub fn fixtures() -> Result<Vec<Fixture>> {
    match std::env::var_os(FIXTURES_ENV) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Fixture(format!("{}: {e}", path.to_string_lossy())))?;
            parse_fixtures(&text)
        }
        None => parse_fixtures(EMBEDDED_FIXTURES),
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    function: Function,
    domain: Domain,
    true_minimizers: Vec<Vec<f64>>,
    true_min_value: f64,
    output_variance: f64,
}

/// Builds a benchmark by name.
///
/// Ackley accepts any dimension (its minimum is known in closed form); the
/// other functions need a fixture entry for the requested dimension.
pub fn make(name: &str, d: usize) -> Result<Benchmark> {
    make_with(name, d, &fixtures()?)
}

pub fn make_with(name: &str, d: usize, fixtures: &[Fixture]) -> Result<Benchmark> {
    let function = Function::parse(name)?;
    let unknown = || Error::UnknownBenchmark(format!("{name} in dimension {d}"));
    if d == 0 || function.fixed_dim().is_some_and(|fd| fd != d) {
        return Err(unknown());
    }
    let entry = fixtures.iter().find(|f| f.name == function.name() && f.dim == d);
    let (domain, minimizers, min_value) = match (function, entry) {
        (_, Some(f)) => (Domain::new(f.lower.clone(), f.upper.clone())?, f.minimizers.clone(), f.min_value),
        (Function::Ackley, None) => (Domain::new(vec![-32.768; d], vec![32.768; d])?, vec![vec![0.0; d]], 0.0),
        _ => return Err(unknown()),
    };
    let mut bench = Benchmark { function, domain, true_minimizers: minimizers, true_min_value: min_value, output_variance: 0.0 };
    bench.output_variance = bench.probe_variance();
    Ok(bench)
}

impl Benchmark {
    pub fn function(&self) -> Function {
        self.function
    }

    pub fn name(&self) -> &'static str {
        self.function.name()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.function.eval(x)
    }

    pub fn true_minimizers(&self) -> &[Vec<f64>] {
        &self.true_minimizers
    }

    pub fn true_min_value(&self) -> f64 {
        self.true_min_value
    }

    /// Output variance over the domain, from `N_VARIANCE_PROBES` LHS points.
    pub fn output_variance(&self) -> f64 {
        self.output_variance
    }

    pub fn truth(&self) -> Truth {
        Truth {
            minimizers_unit: self
                .true_minimizers
                .iter()
                .map(|m| self.domain.rescale_to_unit(m).expect("fixture minimizer inside domain"))
                .collect(),
            min_value: self.true_min_value,
        }
    }

    fn probe_variance(&self) -> f64 {
        let mut rng = Streams::new(PROBE_SEED, 0).get(Purpose::Probe, 0);
        let design = lhs(N_VARIANCE_PROBES, self.dim(), &mut rng);
        let ys: Vec<f64> = design.points().iter().map(|u| self.evaluate_unit(u)).collect();
        variance(&ys)
    }
}

impl Objective for Benchmark {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn evaluate_unit(&self, u: &[f64]) -> f64 {
        self.function.eval(&self.domain.unrescale(u))
    }

    fn noise_reference_variance(&self) -> Option<f64> {
        Some(self.output_variance)
    }
}

/// Unit-cube view of a benchmark with additive Gaussian noise of variance
/// `sigma_eps2 * output_variance`.
pub struct NoisyUnitWrapper<'a> {
    bench: &'a Benchmark,
    sd: f64,
    rng: Rng,
}

impl<'a> NoisyUnitWrapper<'a> {
    pub fn new(bench: &'a Benchmark, sigma_eps2: f64, rng: Rng) -> Result<Self> {
        if !(sigma_eps2 >= 0.0 && sigma_eps2.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be nonnegative".into()));
        }
        Ok(Self { bench, sd: (sigma_eps2 * bench.output_variance).sqrt(), rng })
    }

    pub fn noise_variance(&self) -> f64 {
        self.sd * self.sd
    }

    pub fn evaluate(&mut self, u: &[f64]) -> f64 {
        let f = self.bench.evaluate_unit(u);
        if self.sd == 0.0 {
            return f;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        f + self.sd * z
    }
}

/// Uniform-input samples of the output, for tail inspection.
pub fn output_samples<R: rand::Rng + ?Sized>(bench: &Benchmark, n_samples: usize, rng: &mut R) -> Vec<f64> {
    let d = bench.dim();
    (0..n_samples)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            bench.evaluate_unit(&u)
        })
        .collect()
}

/// KDE of the output under uniform input.
pub fn output_pdf<R: rand::Rng + ?Sized>(bench: &Benchmark, n_samples: usize, rng: &mut R) -> Result<Kde1d> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter("output pdf needs at least 1000 samples".into()));
    }
    kde_1d(&output_samples(bench, n_samples, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_rng;
    use rand::Rng as _;

    fn random_point(b: &Benchmark, rng: &mut Rng) -> Vec<f64> {
        let u: Vec<f64> = (0..b.dim()).map(|_| rng.random::<f64>()).collect();
        b.domain().unrescale(&u)
    }

    fn all() -> Vec<Benchmark> {
        vec![
            make("ackley", 2).unwrap(),
            make("branin", 2).unwrap(),
            make("bukin", 2).unwrap(),
            make("michalewicz", 2).unwrap(),
            make("michalewicz", 10).unwrap(),
            make("hartmann6", 6).unwrap(),
        ]
    }

    #[test]
    fn closed_form_zeros() {
        assert_eq!(ackley(&[0.0, 0.0]), 0.0);
        assert_eq!(ackley(&[0.0; 7]), 0.0);
        assert_eq!(bukin(&[-10.0, 1.0]), 0.0);
    }

    #[test]
    fn unknown_names_and_dimensions() {
        assert!(matches!(make("rosenbrock", 2), Err(Error::UnknownBenchmark(_))));
        assert!(matches!(make("branin", 3), Err(Error::UnknownBenchmark(_))));
        assert!(matches!(make("hartmann6", 2), Err(Error::UnknownBenchmark(_))));
        assert!(matches!(make("michalewicz", 5), Err(Error::UnknownBenchmark(_))));
        assert!(matches!(make("ackley", 0), Err(Error::UnknownBenchmark(_))));
        assert!(make("ackley", 5).is_ok());
    }

    #[test]
    fn fixtures_are_consistent() {
        for f in fixtures().unwrap() {
            let b = make(&f.name, f.dim).unwrap();
            for m in &f.minimizers {
                let gap = b.evaluate(m) - f.min_value;
                assert!((0.0..=1e-6).contains(&gap), "{} d={}: {gap}", f.name, f.dim);
                assert!(b.domain().contains(m));
            }
        }
    }

    #[test]
    fn analytic_ackley_agrees_with_fixture() {
        let from_fixture = make("ackley", 2).unwrap();
        let analytic = make_with("ackley", 2, &[]).unwrap();
        assert_eq!(from_fixture.true_min_value(), analytic.true_min_value());
        assert_eq!(from_fixture.true_minimizers(), analytic.true_minimizers());
        assert_eq!(from_fixture.domain(), analytic.domain());
    }

    #[test]
    fn minimizers_are_local_minima() {
        for b in all() {
            for m in b.true_minimizers() {
                let f0 = b.evaluate(m);
                for i in 0..b.dim() {
                    for s in [1e-4, -1e-4] {
                        let mut x = m.clone();
                        x[i] += s;
                        if b.domain().contains(&x) {
                            assert!(b.evaluate(&x) > f0, "{} axis {i} step {s}", b.name());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ackley_is_even() {
        let b = make("ackley", 3).unwrap();
        let mut rng = make_rng(11);
        for _ in 0..100 {
            let x = random_point(&b, &mut rng);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(ackley(&x), ackley(&neg));
            for i in 0..3 {
                let mut y = x.clone();
                y[i] = -y[i];
                assert!((ackley(&x) - ackley(&y)).abs() <= 1e-12);
            }
        }
    }

    // Largest |f(x) - f(y)| over grid pairs with y = x + 0.05 (cos a, sin a) on coordinates (i, j).
    fn max_jump(d: usize, i: usize, j: usize, n: usize) -> f64 {
        let mut best: f64 = 0.0;
        let mut x = vec![1.0; d];
        for a in 0..8 {
            let ang = a as f64 * PI / 4.0;
            let (di, dj) = (0.05 * ang.cos(), 0.05 * ang.sin());
            for p in 0..=n {
                for q in 0..=n {
                    x[i] = PI * p as f64 / n as f64;
                    x[j] = PI * q as f64 / n as f64;
                    let mut y = x.clone();
                    y[i] += di;
                    y[j] += dj;
                    if (0.0..=PI).contains(&y[i]) && (0.0..=PI).contains(&y[j]) {
                        best = best.max((michalewicz(&x) - michalewicz(&y)).abs());
                    }
                }
            }
        }
        best
    }

    #[test]
    fn michalewicz_is_steep() {
        // The steep ridges belong to the high-index coordinates.
        assert!(max_jump(10, 8, 9, 1000) > 1.0);
        // In two dimensions a 0.05 step moves f by well under 1.
        let two = max_jump(2, 0, 1, 1000);
        assert!(two > 0.25 && two < 1.0, "{two}");
    }

    #[test]
    fn noiseless_wrapper_matches_exact() {
        let b = make("branin", 2).unwrap();
        let mut w = NoisyUnitWrapper::new(&b, 0.0, make_rng(1)).unwrap();
        let u = [0.5, 0.5];
        assert_eq!(w.evaluate(&u), b.evaluate(&b.domain().unrescale(&u)));
        assert_eq!(w.evaluate(&u), branin(&[2.5, 7.5]));
    }

    #[test]
    fn wrapper_noise_variance() {
        let b = make("ackley", 2).unwrap();
        let mut w = NoisyUnitWrapper::new(&b, 1e-3, make_rng(2)).unwrap();
        let u = [0.3, 0.7];
        let ys: Vec<f64> = (0..10_000).map(|_| w.evaluate(&u)).collect();
        let target = 1e-3 * b.output_variance();
        assert!((variance(&ys) / target - 1.0).abs() <= 0.2);
    }

    #[test]
    fn wrapper_is_deterministic() {
        let b = make("bukin", 2).unwrap();
        let mut w1 = NoisyUnitWrapper::new(&b, 1e-2, make_rng(3)).unwrap();
        let mut w2 = NoisyUnitWrapper::new(&b, 1e-2, make_rng(3)).unwrap();
        for k in 0..50 {
            let u = [k as f64 / 50.0, 0.5];
            assert_eq!(w1.evaluate(&u), w2.evaluate(&u));
        }
    }

    #[test]
    fn output_variance_uses_fixed_probes() {
        let a = make("hartmann6", 6).unwrap();
        let b = make("hartmann6", 6).unwrap();
        assert_eq!(a.output_variance(), b.output_variance());
        assert!(a.output_variance() > 0.0);
    }

    #[test]
    fn output_pdfs_are_normalized() {
        for b in all().iter().take(4) {
            let kde = output_pdf(b, 100_000, &mut make_rng(4)).unwrap();
            assert!((kde.trapezoid_integral() - 1.0).abs() <= 0.01, "{}", b.name());
        }
        assert!(output_pdf(&make("ackley", 2).unwrap(), 999, &mut make_rng(4)).is_err());
    }

    fn tail_fraction(ys: &[f64], min: f64) -> f64 {
        let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = min + 0.01 * (max - min);
        ys.iter().filter(|y| **y < cut).count() as f64 / ys.len() as f64
    }

    // Distance from the true minimum to the sample median in units of the sample std.
    fn left_reach(ys: &[f64], min: f64) -> f64 {
        let mut s = ys.to_vec();
        s.sort_by(f64::total_cmp);
        (crate::stats::median(&s) - min) / variance(ys).sqrt()
    }

    #[test]
    fn ackley_left_tail_is_thin_but_present() {
        let b = make("ackley", 2).unwrap();
        let ys = output_samples(&b, 10_000_000, &mut make_rng(5));
        let frac = tail_fraction(&ys, b.true_min_value());
        assert!(frac > 0.0 && frac < 0.01, "{frac}");
    }

    #[test]
    fn branin_left_tail_is_lighter_than_ackley() {
        let ackley = make("ackley", 2).unwrap();
        let branin = make("branin", 2).unwrap();
        let ya = output_samples(&ackley, 100_000, &mut make_rng(6));
        let yb = output_samples(&branin, 100_000, &mut make_rng(6));
        let (ra, rb) = (left_reach(&ya, ackley.true_min_value()), left_reach(&yb, branin.true_min_value()));
        assert!(ra >= 2.0 * rb, "ackley {ra} branin {rb}");
        // Fraction within 1% of the range behaves the other way round.
        assert!(tail_fraction(&yb, branin.true_min_value()) > tail_fraction(&ya, ackley.true_min_value()));
    }
}
