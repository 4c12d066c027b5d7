//! Unnormalized Gaussian mixtures and a weighted EM fitter.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::stats::ln_2pi;

#[derive(Debug, Clone)]
struct Component {
    /// Lower Cholesky factor of the covariance, row-major.
    chol: Vec<f64>,
    /// `ln alpha - d/2 ln 2pi - 1/2 ln |Sigma|`.
    log_scale: f64,
}

/// `total_mass * sum_i alpha_i N(x; mean_i, cov_i)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
    total_mass: f64,
    cache: Vec<Component>,
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.means == other.means
            && self.covariances == other.covariances
            && self.total_mass == other.total_mass
    }
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<DMatrix<f64>>,
        total_mass: f64,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParameter("mixture component counts disagree".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("mixture dimension must be positive".into()));
        }
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidParameter("total mass must be positive".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let mut cache = Vec::with_capacity(k);
        for i in 0..k {
            if means[i].len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: means[i].len() });
            }
            let c = &covariances[i];
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.nrows() });
            }
            if (c - c.transpose()).amax() > 1e-12 * c.amax().max(1.0) {
                return Err(Error::NotPositiveDefinite("mixture covariance is not symmetric"));
            }
            let l = c
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite("mixture covariance"))?
                .l();
            let log_det: f64 = 2.0 * (0..d).map(|j| l[(j, j)].ln()).sum::<f64>();
            let chol = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|rc| l[rc]).collect();
            cache.push(Component {
                chol,
                log_scale: weights[i].ln() - 0.5 * (d as f64 * ln_2pi() + log_det),
            });
        }
        Ok(Self { weights, means, covariances, total_mass, cache })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Unnormalized component weights `total_mass * alpha_i`.
    pub fn betas(&self) -> Vec<f64> {
        self.weights.iter().map(|a| a * self.total_mass).collect()
    }

    /// Same components, total mass multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            self.means.clone(),
            self.covariances.clone(),
            self.total_mass * c,
        )
    }

    /// `ln(alpha_i N(x; mean_i, cov_i))`; `z` receives the whitened residual.
    fn log_component(&self, i: usize, x: &[f64], z: &mut [f64]) -> f64 {
        let comp = &self.cache[i];
        whiten(&comp.chol, &self.means[i], x, z);
        comp.log_scale - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.dim()];
        let s: f64 = (0..self.n_components()).map(|i| self.log_component(i, x, &mut z).exp()).sum();
        self.total_mass * s
    }

    pub fn evaluate_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut value = 0.0;
        for i in 0..self.n_components() {
            let p = self.log_component(i, x, &mut z).exp();
            value += p;
            // -p Sigma^{-1}(x - mean) = -p L^{-T} z
            back_solve_transpose(&self.cache[i].chol, &mut z);
            for j in 0..d {
                grad[j] -= p * z[j];
            }
        }
        grad.iter_mut().for_each(|g| *g *= self.total_mass);
        (self.total_mass * value, grad)
    }
}

// z = L^{-1}(x - mean)
fn whiten(chol: &[f64], mean: &[f64], x: &[f64], z: &mut [f64]) {
    let d = mean.len();
    for r in 0..d {
        let mut acc = x[r] - mean[r];
        for c in 0..r {
            acc -= chol[r * d + c] * z[c];
        }
        z[r] = acc / chol[r * d + r];
    }
}

// z <- L^{-T} z
fn back_solve_transpose(chol: &[f64], z: &mut [f64]) {
    let d = z.len();
    for r in (0..d).rev() {
        let mut acc = z[r];
        for c in r + 1..d {
            acc -= chol[c * d + r] * z[c];
        }
        z[r] = acc / chol[r * d + r];
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the normalized weighted log-likelihood.
    pub tol: f64,
    /// Lower bound on covariance eigenvalues.
    pub cov_floor: f64,
    /// Iterations a component may sit fully on the floor before it is pruned.
    pub floor_patience: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, cov_floor: 1e-6, floor_patience: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Weighted log-likelihood (weights normalized to sum 1) after each E-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Components removed by pruning.
    pub pruned: usize,
}

/// Weighted EM with weighted k-means++ seeding. Degenerate components are
/// pruned and the fit restarted with one fewer component.
pub fn weighted_em<R: rand::Rng + ?Sized>(
    points: &[Vec<f64>],
    weights: &[f64],
    n_components: usize,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<EmFit> {
    if n_components == 0 {
        return Err(Error::InvalidParameter("n_gmm must be at least 1".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: weights.len() });
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter("EM needs at least one point".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("EM weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateDensity);
    }
    let w: Vec<f64> = weights.iter().map(|v| v / total).collect();

    let mut k = n_components.min(w.iter().filter(|v| **v > 0.0).count());
    let mut pruned = n_components - k;
    loop {
        match em_once(points, &w, k, opts, rng) {
            Ok(mut fit) => {
                fit.pruned = pruned;
                return Ok(fit);
            }
            Err(_) if k > 1 => {
                k -= 1;
                pruned += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn em_once<R: rand::Rng + ?Sized>(
    points: &[Vec<f64>],
    w: &[f64],
    k: usize,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<EmFit> {
    let n = points.len();
    let d = points[0].len();
    let centers = kmeans_pp(points, w, k, rng);

    let global = weighted_cov(points, w, &weighted_mean(points, w), 1.0);
    let (global, _) = clamp_eigen(global, opts.cov_floor);
    let mut means = centers;
    let mut covs = vec![global; k];
    let mut alphas = vec![1.0 / k as f64; k];
    let mut floor_streak = vec![0usize; k];

    let mut resp = vec![0.0; n * k];
    let mut history = Vec::new();
    let mut converged = false;
    let mut z = vec![0.0; d];
    let mut logp = vec![0.0; k];

    for _ in 0..opts.max_iter {
        let mix = match GaussianMixture::new(alphas.clone(), means.clone(), covs.clone(), 1.0) {
            Ok(m) => m,
            Err(_) => return Err(Error::DegenerateDensity),
        };
        // E-step
        let mut ll = 0.0;
        for s in 0..n {
            for (j, lp) in logp.iter_mut().enumerate() {
                *lp = mix.log_component(j, &points[s], &mut z);
            }
            let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logp.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for j in 0..k {
                resp[s * k + j] = w[s] * (logp[j] - lse).exp();
            }
            if w[s] > 0.0 {
                ll += w[s] * lse;
            }
        }
        if let Some(prev) = history.last().copied() {
            debug_assert!(ll >= prev - 1e-9 * (1.0 + f64::abs(prev)), "EM decreased: {prev} -> {ll}");
            history.push(ll);
            if (ll - prev).abs() < opts.tol {
                converged = true;
                break;
            }
        } else {
            history.push(ll);
        }

        // M-step
        for j in 0..k {
            let nj: f64 = (0..n).map(|s| resp[s * k + j]).sum();
            if nj < 1e-8 {
                return Err(Error::DegenerateDensity);
            }
            alphas[j] = nj;
            let mut m = vec![0.0; d];
            for s in 0..n {
                let r = resp[s * k + j];
                for c in 0..d {
                    m[c] += r * points[s][c];
                }
            }
            m.iter_mut().for_each(|v| *v /= nj);
            let rj: Vec<f64> = (0..n).map(|s| resp[s * k + j]).collect();
            let cov = weighted_cov(points, &rj, &m, nj);
            let (cov, n_clamped) = clamp_eigen(cov, opts.cov_floor);
            if n_clamped == d {
                floor_streak[j] += 1;
                if floor_streak[j] >= opts.floor_patience && k > 1 {
                    return Err(Error::DegenerateDensity);
                }
            } else {
                floor_streak[j] = 0;
            }
            means[j] = m;
            covs[j] = cov;
        }
        let sa: f64 = alphas.iter().sum();
        alphas.iter_mut().for_each(|a| *a /= sa);
    }

    // a component that ends fully on the floor has collapsed onto a point
    if k > 1 && floor_streak.iter().any(|s| *s > 0) {
        return Err(Error::DegenerateDensity);
    }
    Ok(EmFit { weights: alphas, means, covariances: covs, log_likelihood: history, converged, pruned: 0 })
}

fn weighted_mean(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let d = points[0].len();
    let mut m = vec![0.0; d];
    let mut tot = 0.0;
    for (p, wi) in points.iter().zip(w) {
        tot += wi;
        for c in 0..d {
            m[c] += wi * p[c];
        }
    }
    m.iter_mut().for_each(|v| *v /= tot);
    m
}

fn weighted_cov(points: &[Vec<f64>], w: &[f64], mean: &[f64], total: f64) -> DMatrix<f64> {
    let d = mean.len();
    let mut c = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (p, wi) in points.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        for j in 0..d {
            diff[j] = p[j] - mean[j];
        }
        for r in 0..d {
            for col in 0..=r {
                c[(r, col)] += wi * diff[r] * diff[col];
            }
        }
    }
    for r in 0..d {
        for col in 0..=r {
            let v = c[(r, col)] / total;
            c[(r, col)] = v;
            c[(col, r)] = v;
        }
    }
    c
}

/// Raises every eigenvalue below `floor` to `floor`; returns the number raised.
fn clamp_eigen(c: DMatrix<f64>, floor: f64) -> (DMatrix<f64>, usize) {
    let d = c.nrows();
    if d == 1 {
        let v = c[(0, 0)];
        return if v < floor { (DMatrix::from_element(1, 1, floor), 1) } else { (c, 0) };
    }
    let eig = SymmetricEigen::new(c.clone());
    let raised = eig.eigenvalues.iter().filter(|v| **v < floor).count();
    if raised == 0 {
        return (c, 0);
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    out = 0.5 * (&out + out.transpose());
    (out, raised)
}

/// Weighted k-means++ seeding: each new center is drawn with probability
/// proportional to weight times squared distance to the nearest chosen center.
fn kmeans_pp<R: rand::Rng + ?Sized>(
    points: &[Vec<f64>],
    w: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[draw(w, rng)].clone()];
    let mut dist = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = centers.last().unwrap();
        for s in 0..n {
            let d2: f64 = points[s].iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum();
            dist[s] = dist[s].min(d2);
        }
        let score: Vec<f64> = (0..n).map(|s| w[s] * dist[s]).collect();
        let idx = if score.iter().sum::<f64>() > 0.0 { draw(&score, rng) } else { draw(w, rng) };
        centers.push(points[idx].clone());
    }
    centers
}

fn draw<R: rand::Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, v) in w.iter().enumerate() {
        if target < *v {
            return i;
        }
        target -= v;
    }
    w.iter().rposition(|v| *v > 0.0).unwrap_or(w.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_rng;
    use crate::testutil::{central_diff, rel_err};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_blob_mixture() -> GaussianMixture {
        GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![0.2, 0.3], vec![0.7, 0.6]],
            vec![
                DMatrix::from_row_slice(2, 2, &[0.01, 0.003, 0.003, 0.02]),
                DMatrix::from_row_slice(2, 2, &[0.04, -0.01, -0.01, 0.03]),
            ],
            2.5,
        )
        .unwrap()
    }

    #[test]
    fn single_gaussian_value() {
        let m = GaussianMixture::new(
            vec![1.0],
            vec![vec![0.0]],
            vec![DMatrix::from_element(1, 1, 4.0)],
            3.0,
        )
        .unwrap();
        let expect = 3.0 * (-0.5 * 1.0f64 / 4.0).exp() / (2.0 * std::f64::consts::PI * 4.0).sqrt();
        assert!((m.evaluate(&[1.0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn integral_equals_total_mass() {
        let m = two_blob_mixture();
        // tensor midpoint rule over a box holding essentially all mass
        let n = 600;
        let (lo, hi) = (-1.0, 2.0);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                acc += m.evaluate(&x);
            }
        }
        assert!((acc * h * h - 2.5).abs() < 1e-6, "{}", acc * h * h);
        assert!((m.betas().iter().sum::<f64>() - m.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = two_blob_mixture();
        let mut rng = make_rng(5);
        for _ in 0..50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let (v, g) = m.evaluate_grad(&x);
            assert!((v - m.evaluate(&x)).abs() < 1e-12 * v.max(1.0));
            let fd = central_diff(|p| m.evaluate(p), &x, 1e-6);
            assert!(rel_err(&g, &fd) < 1e-6, "{g:?} {fd:?}");
        }
    }

    #[test]
    fn rejects_bad_covariance() {
        let bad = GaussianMixture::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])],
            1.0,
        );
        assert!(bad.is_err());
    }

    fn blob_points(rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
        (0..3000)
            .map(|i| {
                let z0: f64 = StandardNormal.sample(rng);
                let z1: f64 = StandardNormal.sample(rng);
                if i % 2 == 0 {
                    vec![0.2 + 0.05 * z0, 0.3 + 0.05 * z1]
                } else {
                    vec![0.75 + 0.08 * z0, 0.7 + 0.04 * z1]
                }
            })
            .collect()
    }

    #[test]
    fn em_recovers_two_blobs_and_is_monotone() {
        let mut rng = make_rng(6);
        let pts = blob_points(&mut rng);
        let w = vec![1.0; pts.len()];
        let fit = weighted_em(&pts, &w, 2, &EmOptions::default(), &mut rng).unwrap();
        for win in fit.log_likelihood.windows(2) {
            assert!(win[1] >= win[0] - 1e-12 * win[0].abs().max(1.0), "{win:?}");
        }
        let mut ms = fit.means.clone();
        ms.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((ms[0][0] - 0.2).abs() < 0.01 && (ms[0][1] - 0.3).abs() < 0.01);
        assert!((ms[1][0] - 0.75).abs() < 0.01 && (ms[1][1] - 0.7).abs() < 0.01);
        assert!(fit.weights.iter().all(|a| (a - 0.5).abs() < 0.05));
    }

    #[test]
    fn weights_pick_out_one_blob() {
        let mut rng = make_rng(7);
        let pts = blob_points(&mut rng);
        let w: Vec<f64> = (0..pts.len()).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let fit = weighted_em(&pts, &w, 1, &EmOptions::default(), &mut rng).unwrap();
        assert!((fit.means[0][0] - 0.75).abs() < 0.01);
        assert!((fit.covariances[0][(0, 0)] - 0.0064).abs() < 0.001);
        assert!((fit.covariances[0][(1, 1)] - 0.0016).abs() < 0.0003);
    }

    #[test]
    fn collapsed_components_are_pruned() {
        // Every point identical: covariance sits on the floor and extra
        // components cannot survive.
        let pts = vec![vec![0.5, 0.5]; 200];
        let w = vec![1.0; 200];
        let mut rng = make_rng(8);
        let fit = weighted_em(&pts, &w, 3, &EmOptions::default(), &mut rng).unwrap();
        assert_eq!(fit.weights.len(), 1);
        assert_eq!(fit.pruned, 2);
        let eig = SymmetricEigen::new(fit.covariances[0].clone()).eigenvalues;
        assert!(eig.iter().all(|v| *v >= 1e-6 * (1.0 - 1e-9)));
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let pts = vec![vec![0.1], vec![0.2]];
        let mut rng = make_rng(9);
        assert!(matches!(
            weighted_em(&pts, &[0.0, 0.0], 1, &EmOptions::default(), &mut rng),
            Err(Error::DegenerateDensity)
        ));
    }

    #[test]
    fn weight_scale_does_not_change_fit() {
        let mut r1 = make_rng(10);
        let pts = blob_points(&mut r1);
        let w: Vec<f64> = pts.iter().map(|p| 1.0 + p[0]).collect();
        let w2: Vec<f64> = w.iter().map(|v| v / 2.0).collect();
        let a = weighted_em(&pts, &w, 2, &EmOptions::default(), &mut make_rng(11)).unwrap();
        let b = weighted_em(&pts, &w2, 2, &EmOptions::default(), &mut make_rng(11)).unwrap();
        assert_eq!(a, b);
    }
}
