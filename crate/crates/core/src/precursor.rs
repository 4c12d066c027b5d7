//! Extreme-event precursors in a three-mode dynamical system.
//!
//! Initial conditions live in the plane spanned by the two leading principal
//! components of a long trajectory; the objective is the negated maximum of
//! `z` over a finite horizon.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::bo::Objective;
use crate::error::{Error, Result};
use crate::problem::{Domain, InputPrior};

pub type State = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynSystem {
    pub alpha: f64,
    pub omega: f64,
    pub lambda: f64,
    pub beta: f64,
    pub dt: f64,
}

impl Default for DynSystem {
    fn default() -> Self {
        Self { alpha: 0.01, omega: 2.0 * PI, lambda: 0.1, beta: 0.1, dt: 0.01 }
    }
}

impl DynSystem {
    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn rhs(&self, s: &State) -> State {
        let [x, y, z] = *s;
        let (a, w, l, b) = (self.alpha, self.omega, self.lambda, self.beta);
        [
            a * x + w * y + a * x * x + 2.0 * w * x * y + z * z,
            -w * x + a * y - w * x * x + 2.0 * a * x * y,
            -l * z - (l + b) * x * z,
        ]
    }

    fn rk4_step(&self, s: &State) -> State {
        let h = self.dt;
        let shift = |s: &State, k: &State, c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(&shift(s, &k1, 0.5 * h));
        let k3 = self.rhs(&shift(s, &k2, 0.5 * h));
        let k4 = self.rhs(&shift(s, &k3, h));
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    fn steps_for(&self, span: f64, what: &str) -> Result<usize> {
        if !(span > 0.0 && span.is_finite()) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("{what} and dt must be positive")));
        }
        let n = (span / self.dt).round();
        if (n * self.dt - span).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::InvalidParameter(format!("dt = {} does not divide {what} = {span}", self.dt)));
        }
        Ok(n as usize)
    }

    /// RK4 trajectory sampled every step, including `t = 0` and `t = tau`.
    pub fn integrate(&self, x0: &State, tau: f64) -> Result<Vec<State>> {
        let n = self.steps_for(tau, "horizon")?;
        let mut out = Vec::with_capacity(n + 1);
        out.push(*x0);
        self.run(x0, n, |_, s| out.push(*s))?;
        Ok(out)
    }

    /// Final state after `tau`.
    pub fn advance(&self, x0: &State, tau: f64) -> Result<State> {
        let n = self.steps_for(tau, "horizon")?;
        let mut last = *x0;
        self.run(x0, n, |_, s| last = *s)?;
        Ok(last)
    }

    fn run(&self, x0: &State, n: usize, mut visit: impl FnMut(usize, &State)) -> Result<()> {
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: 0.0 });
        }
        let mut s = *x0;
        for k in 1..=n {
            s = self.rk4_step(&s);
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { time: k as f64 * self.dt });
            }
            visit(k, &s);
        }
        Ok(())
    }

    /// Largest `z` attained over `[0, tau]`.
    pub fn danger(&self, x0: &State, tau: f64) -> Result<f64> {
        let n = self.steps_for(tau, "horizon")?;
        let mut best = x0[2];
        self.run(x0, n, |_, s| best = best.max(s[2]))?;
        Ok(best)
    }
}

/// Two-component principal subspace of the background attractor.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaSubspace {
    pub mean: State,
    /// Orthonormal rows, leading component first.
    pub components: [State; 2],
    /// Variances along the components, descending.
    pub eigenvalues: [f64; 2],
}

impl PcaSubspace {
    pub fn from_samples(samples: &[State]) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidParameter("PCA needs at least 3 samples".into()));
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 3];
        for s in samples {
            for i in 0..3 {
                mean[i] += s[i] / n;
            }
        }
        let mut cov = Matrix3::<f64>::zeros();
        for s in samples {
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        let ev: [f64; 3] = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        order.sort_by(|&a, &b| ev[b].total_cmp(&ev[a]));
        let eigenvalues = [ev[order[0]], ev[order[1]]];
        let top = eigenvalues[0];
        if !(eigenvalues[1] > 1e-12 * top.max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidParameter("degenerate attractor covariance".into()));
        }
        let column = |k: usize| -> State {
            let c = eig.eigenvectors.column(order[k]);
            // Fix the sign so the largest-magnitude entry is positive.
            let big = (0..3).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap();
            let s = c[big].signum();
            [s * c[0], s * c[1], s * c[2]]
        };
        Ok(Self { mean, components: [column(0), column(1)], eigenvalues })
    }

    /// `mean + a[0] c_0 + a[1] c_1`.
    pub fn lift(&self, a: &[f64]) -> State {
        std::array::from_fn(|i| self.mean[i] + a[0] * self.components[0][i] + a[1] * self.components[1][i])
    }

    /// Largest `|e_z . c_i|`.
    pub fn z_alignment(&self) -> f64 {
        self.components[0][2].abs().max(self.components[1][2].abs())
    }
}

/// Attractor-sampling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceSettings {
    pub burn_in: f64,
    pub sample_time: f64,
    pub stride: f64,
    pub start: State,
}

impl Default for SubspaceSettings {
    fn default() -> Self {
        Self { burn_in: 100.0, sample_time: 1000.0, stride: 0.1, start: [0.1, 0.0, 0.01] }
    }
}

/// Runs one long trajectory, discards the burn-in and keeps every `stride`.
pub fn attractor_samples(system: &DynSystem, settings: &SubspaceSettings) -> Result<Vec<State>> {
    let per = system.steps_for(settings.stride, "stride")?;
    let burn = system.steps_for(settings.burn_in, "burn-in")?;
    let total = system.steps_for(settings.burn_in + settings.sample_time, "sampling time")?;
    if settings.sample_time <= settings.burn_in {
        return Err(Error::InvalidParameter("sampling time must exceed the burn-in".into()));
    }
    let mut out = Vec::with_capacity((total - burn) / per + 1);
    system.run(&settings.start, total, |k, s| {
        if k >= burn && (k - burn) % per == 0 {
            out.push(*s);
        }
    })?;
    Ok(out)
}

pub fn build_subspace(system: &DynSystem, settings: &SubspaceSettings) -> Result<PcaSubspace> {
    PcaSubspace::from_samples(&attractor_samples(system, settings)?)
}

/// `-danger` over PCA coefficients, on the box of four standard deviations.
#[derive(Debug, Clone)]
pub struct PrecursorObjective {
    pub system: DynSystem,
    pub subspace: PcaSubspace,
    pub tau: f64,
    domain: Domain,
}

pub const DEFAULT_HORIZON: f64 = 50.0;
pub const BOX_STDS: f64 = 4.0;

impl PrecursorObjective {
    pub fn new(system: DynSystem, subspace: PcaSubspace, tau: f64) -> Result<Self> {
        system.steps_for(tau, "horizon")?;
        let half: Vec<f64> = subspace.eigenvalues.iter().map(|l| BOX_STDS * l.sqrt()).collect();
        let domain = Domain::new(half.iter().map(|h| -h).collect(), half)?;
        Ok(Self { system, subspace, tau, domain })
    }

    /// Default system, subspace and horizon.
    pub fn standard() -> Result<Self> {
        let system = DynSystem::default();
        let subspace = build_subspace(&system, &SubspaceSettings::default())?;
        Self::new(system, subspace, DEFAULT_HORIZON)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Zero-mean Gaussian with the PCA eigenvalues as variances.
    pub fn prior(&self) -> InputPrior {
        InputPrior::gaussian_diagonal(self.domain.clone(), self.subspace.eigenvalues.to_vec())
            .expect("positive eigenvalues")
    }

    pub fn danger_at(&self, a: &[f64]) -> Result<f64> {
        self.system.danger(&self.subspace.lift(a), self.tau)
    }

    /// `-danger`; a trajectory that blows up is reported as non-finite.
    pub fn evaluate(&self, a: &[f64]) -> f64 {
        self.danger_at(a).map_or(f64::NAN, |d| -d)
    }
}

impl Objective for PrecursorObjective {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate_unit(&self, u: &[f64]) -> f64 {
        self.evaluate(&self.domain.unrescale(u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> DynSystem {
        DynSystem::default()
    }

    #[test]
    fn equilibria() {
        assert_eq!(sys().rhs(&[0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        assert_eq!(sys().rhs(&[-1.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        for x0 in [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]] {
            let traj = sys().integrate(&x0, 50.0).unwrap();
            assert_eq!(traj.len(), 5001);
            assert!(traj.iter().all(|s| *s == x0));
        }
        assert_eq!(sys().danger(&[0.0; 3], 50.0).unwrap(), 0.0);
    }

    #[test]
    fn invariant_plane() {
        let x0 = [0.3, -0.2, 0.0];
        let traj = sys().integrate(&x0, 50.0).unwrap();
        assert!(traj.iter().all(|s| s[2].abs() <= 1e-12));
        assert_eq!(sys().danger(&x0, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn step_halving() {
        let x0 = [0.1, 0.0, 0.01];
        let s1 = sys().advance(&x0, 10.0).unwrap();
        let s2 = sys().with_dt(0.005).advance(&x0, 10.0).unwrap();
        let s4 = sys().with_dt(0.0025).advance(&x0, 10.0).unwrap();
        let e1 = (0..3).map(|i| (s1[i] - s2[i]).abs()).fold(0.0, f64::max);
        let e2 = (0..3).map(|i| (s2[i] - s4[i]).abs()).fold(0.0, f64::max);
        assert!(e1 <= 1e-6, "{e1}");
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "{order}");
    }

    #[test]
    fn horizon_must_be_a_multiple_of_dt() {
        assert!(sys().integrate(&[0.1, 0.0, 0.0], 0.015).is_err());
        assert!(sys().integrate(&[0.1, 0.0, 0.0], -1.0).is_err());
        assert!(sys().integrate(&[0.1, 0.0, 0.0], 0.02).is_ok());
    }

    #[test]
    fn blow_up_reports_time() {
        let fast = DynSystem { alpha: 5.0, ..sys() };
        match fast.integrate(&[10.0, 10.0, 10.0], 50.0) {
            Err(Error::BlowUp { time }) => assert!(time > 0.0 && time < 50.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn burst_heights() {
        // Free-running bursts settle well below 1.
        let free = sys().danger(&[0.1, 0.0, 0.01], 2000.0).unwrap();
        assert!((0.5..=0.7).contains(&free), "{free}");
        // Starting next to the saddle-focus at (-1, 0, 0) gives a burst near 0.95.
        let near = sys().danger(&[-0.99, 0.0, 0.026], 50.0).unwrap();
        assert!((0.9..=1.0).contains(&near), "{near}");
    }

    #[test]
    fn planar_pca() {
        let samples: Vec<State> =
            (0..500).map(|k| [(k as f64 * 0.37).sin() * 2.0, (k as f64 * 0.11).cos(), 0.0]).collect();
        let p = PcaSubspace::from_samples(&samples).unwrap();
        assert!(p.z_alignment() <= 1e-10);
        assert!(p.eigenvalues[0] >= p.eigenvalues[1] && p.eigenvalues[1] > 0.0);
        let dot = |a: &State, b: &State| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let c = &p.components;
        assert!((dot(&c[0], &c[0]) - 1.0).abs() <= 1e-10);
        assert!((dot(&c[1], &c[1]) - 1.0).abs() <= 1e-10);
        assert!(dot(&c[0], &c[1]).abs() <= 1e-10);
        let collinear: Vec<State> = (0..50).map(|k| [k as f64, 2.0 * k as f64, 0.0]).collect();
        assert!(PcaSubspace::from_samples(&collinear).is_err());
    }

    #[test]
    fn attractor_subspace() {
        let p = build_subspace(&sys(), &SubspaceSettings::default()).unwrap();
        assert!(p.z_alignment() <= 0.3, "{p:?}");
        assert!(p.eigenvalues[0] >= p.eigenvalues[1] && p.eigenvalues[1] > 0.0);
        let obj = PrecursorObjective::new(sys(), p.clone(), DEFAULT_HORIZON).unwrap();
        for i in 0..2 {
            assert_eq!(obj.domain().upper()[i], 4.0 * p.eigenvalues[i].sqrt());
            assert_eq!(obj.domain().lower()[i], -4.0 * p.eigenvalues[i].sqrt());
        }
        assert_eq!(p.lift(&[0.0, 0.0]), p.mean);
        assert!(obj.evaluate(&[0.0, 0.0]).is_finite());
        assert_eq!(obj.evaluate_unit(&[0.5, 0.5]), obj.evaluate(&[0.0, 0.0]));
    }
}
