//! One-dimensional Gaussian KDE on a regular grid via linear binning and FFT convolution.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::stats::INV_SQRT_2PI;

pub const DEFAULT_GRID_SIZE: usize = 1024;
pub const MIN_SAMPLES: usize = 100;
/// Density floor relative to the grid maximum.
pub const FLOOR_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    start: f64,
    step: f64,
    density: Vec<f64>,
    bandwidth: f64,
}

impl Kde1d {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.density.len()).map(|i| self.start + i as f64 * self.step).collect()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn support(&self) -> (f64, f64) {
        (self.start, self.start + (self.density.len() - 1) as f64 * self.step)
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    pub fn p_min(&self) -> f64 {
        FLOOR_RATIO * self.max_density()
    }

    /// Linear interpolation on the grid; zero outside it.
    pub fn eval(&self, y: f64) -> f64 {
        let t = (y - self.start) / self.step;
        if !(t >= 0.0) || t > (self.density.len() - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(self.density.len() - 2);
        let frac = t - i as f64;
        self.density[i] * (1.0 - frac) + self.density[i + 1] * frac
    }

    /// `max(eval(y), p_min)`.
    pub fn eval_floored(&self, y: f64) -> f64 {
        self.eval(y).max(self.p_min())
    }

    pub fn trapezoid_integral(&self) -> f64 {
        let n = self.density.len();
        let inner: f64 = self.density[1..n - 1].iter().sum();
        self.step * (inner + 0.5 * (self.density[0] + self.density[n - 1]))
    }

    /// Every density value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { density: self.density.iter().map(|v| v * c).collect(), ..self.clone() }
    }
}

/// Silverman's rule of thumb, `0.9 min(std, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_select(samples, 0.75) - quantile_select(samples, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    0.9 * spread * n.powf(-0.2)
}

// Linear-time quantile with linear interpolation between order statistics.
fn quantile_select(samples: &[f64], q: f64) -> f64 {
    let mut buf = samples.to_vec();
    let pos = q * (buf.len() - 1) as f64;
    let k = pos.floor() as usize;
    let (_, lo, rest) = buf.select_nth_unstable_by(k, f64::total_cmp);
    let lo = *lo;
    if rest.is_empty() {
        return lo;
    }
    let hi = rest.iter().copied().fold(f64::INFINITY, f64::min);
    lo + (pos - k as f64) * (hi - lo)
}

pub fn kde_1d(samples: &[f64]) -> Result<Kde1d> {
    kde_1d_with(samples, DEFAULT_GRID_SIZE)
}

pub fn kde_1d_with(samples: &[f64], grid_size: usize) -> Result<Kde1d> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "KDE needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if grid_size < 2 {
        return Err(Error::InvalidParameter("KDE grid needs at least 2 points".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("KDE samples must be finite".into()));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let h = silverman_bandwidth(samples);
    if hi <= lo || !(h > 0.0) || !h.is_finite() {
        return Err(Error::DegenerateDensity);
    }

    let m = grid_size;
    let start = lo - 3.0 * h;
    let step = (hi - lo + 6.0 * h) / (m - 1) as f64;

    let mut counts = vec![0.0; m];
    for &v in samples {
        let t = (v - start) / step;
        let i = (t.floor() as usize).min(m - 2);
        let frac = t - i as f64;
        counts[i] += 1.0 - frac;
        counts[i + 1] += frac;
    }

    // Kernel sampled on the grid and normalized to unit discrete mass.
    let mut kernel: Vec<f64> = (0..m)
        .map(|l| {
            let z = l as f64 * step / h;
            INV_SQRT_2PI * (-0.5 * z * z).exp()
        })
        .collect();
    let mass = step * (kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>());
    kernel.iter_mut().for_each(|k| *k /= mass);

    let p = (2 * m).next_power_of_two();
    let mut a: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); p];
    let mut b = a.clone();
    for i in 0..m {
        a[i].re = counts[i];
        b[i].re = kernel[i];
        if i > 0 {
            b[p - i].re = kernel[i];
        }
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);

    let scale = 1.0 / (p as f64 * samples.len() as f64);
    let density = a[..m].iter().map(|c| (c.re * scale).max(0.0)).collect();
    Ok(Kde1d { start, step, density, bandwidth: h })
}
