//! Brute-force oracle for the benchmark fixture file.
//!
//! Writes TOML to stdout:
//!
//! ```text
//! cargo run --release -p owbo --example derive_fixtures > crates/core/fixtures/benchmarks.toml
//! ```
//!
//! The test functions are written out again here rather than imported, and
//! refinement uses a derivative-free compass search, so the fixtures do not
//! depend on the library code they are used to check.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut sq = 0.0;
    let mut cs = 0.0;
    for v in x {
        sq += v * v;
        cs += (2.0 * PI * v).cos();
    }
    20.0 * (1.0 - (-0.2 * (sq / n).sqrt()).exp()) + (E - (cs / n).exp())
}

fn branin(x: &[f64]) -> f64 {
    let (p, q) = (x[0], x[1]);
    let inner = q - 5.1 * p * p / (4.0 * PI * PI) + 5.0 * p / PI - 6.0;
    inner * inner + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * p.cos() + 10.0
}

fn bukin(x: &[f64]) -> f64 {
    100.0 * (x[1] - 0.01 * x[0] * x[0]).abs().sqrt() + 0.01 * (x[0] + 10.0).abs()
}

fn michalewicz_term(i: usize, t: f64) -> f64 {
    -t.sin() * ((i as f64) * t * t / PI).sin().powi(20)
}

fn michalewicz(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(k, &t)| michalewicz_term(k + 1, t)).sum()
}

const HA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HM: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HP: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann6(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..4 {
        let mut e = 0.0;
        for c in 0..6 {
            e += HM[r][c] * (x[c] - HP[r][c]).powi(2);
        }
        s -= HA[r] * (-e).exp();
    }
    s
}

/// Compass search inside a box, halving the step until it falls below `tol`.
fn compass(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], lo: &[f64], hi: &[f64], step0: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut step = step0;
    while step > tol {
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step * (hi[i] - lo[i])).clamp(lo[i], hi[i]);
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Grid points that are no larger than any of their 8 neighbours.
fn grid_local_minima(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let at = |i: usize, j: usize| {
        vec![
            lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
            lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
        ]
    };
    let vals: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f(&at(i, j))).collect()).collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = vals[i][j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n {
                        is_min &= v <= vals[a as usize][b as usize];
                    }
                }
            }
            if is_min {
                out.push(at(i, j));
            }
        }
    }
    out
}

fn grid_min(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
            ];
            best = best.min(f(&x));
        }
    }
    best
}

/// Keeps refined points within `tol` of the best value, deduplicated.
fn distinct_best(found: Vec<(Vec<f64>, f64)>, tol: f64) -> (Vec<Vec<f64>>, f64) {
    let best = found.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut keep: Vec<Vec<f64>> = Vec::new();
    for (x, v) in found {
        if v - best <= tol && keep.iter().all(|k| k.iter().zip(&x).any(|(a, b)| (a - b).abs() > 1e-4)) {
            keep.push(x);
        }
    }
    keep.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (keep, best)
}

fn lhs(n: usize, d: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p.iter().map(|&k| (k as f64 + rng.random::<f64>()) / n as f64).collect()
        })
        .collect();
    (0..n).map(|i| cols.iter_mut().map(|c| c[i]).collect()).collect()
}

struct Entry {
    name: &'static str,
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    minimizers: Vec<Vec<f64>>,
    min_value: f64,
    domain_source: &'static str,
    oracle: String,
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

fn finish(name: &'static str, f: &dyn Fn(&[f64]) -> f64, lower: Vec<f64>, upper: Vec<f64>, minimizers: Vec<Vec<f64>>, domain_source: &'static str, oracle: String) -> Entry {
    let min_value = minimizers.iter().map(|m| f(m)).fold(f64::INFINITY, f64::min);
    Entry { name, dim: lower.len(), lower, upper, minimizers, min_value, domain_source, oracle }
}

fn derive_ackley() -> Entry {
    let (lo, hi) = (vec![-32.768; 2], vec![32.768; 2]);
    let coarse = grid_min(&ackley, &lo, &hi, 4001);
    let mut found = Vec::new();
    for x0 in grid_local_minima(&ackley, &[-2.0, -2.0], &[2.0, 2.0], 401) {
        found.push(compass(&ackley, &x0, &lo, &hi, 1e-3, 1e-15));
    }
    let (mins, best) = distinct_best(found, 1e-9);
    assert!(best <= coarse);
    finish("ackley", &ackley, lo, hi, mins, "standard box [-32.768, 32.768]^d",
        "4001^2 grid over the domain, 401^2 grid local minima on [-2,2]^2 refined by compass search".into())
}

fn derive_branin() -> Entry {
    let (lo, hi) = (vec![-5.0, 0.0], vec![10.0, 15.0]);
    let starts = grid_local_minima(&branin, &lo, &hi, 1501);
    let n = starts.len();
    let found = starts.into_iter().map(|x0| compass(&branin, &x0, &lo, &hi, 1e-3, 1e-15)).collect();
    let (mins, _) = distinct_best(found, 1e-9);
    finish("branin", &branin, lo, hi, mins, "standard box [-5, 10] x [0, 15]",
        format!("1501^2 grid, {n} grid local minima refined by compass search"))
}

fn derive_bukin() -> Entry {
    let (lo, hi) = (vec![-15.0, -3.0], vec![-5.0, 3.0]);
    // On the ridge x2 = 0.01 x1^2 the first term vanishes and f = 0.01 |x1 + 10|.
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=1_000_000 {
        let x1 = lo[0] + (hi[0] - lo[0]) * k as f64 / 1e6;
        let v = bukin(&[x1, 0.01 * x1 * x1]);
        if v < best.0 {
            best = (v, x1);
        }
    }
    let x1 = best.1;
    let coarse = grid_min(&bukin, &lo, &hi, 2001);
    assert!(best.0 <= coarse);
    finish("bukin", &bukin, lo, hi, vec![vec![x1, 0.01 * x1 * x1]], "standard box [-15, -5] x [-3, 3]",
        "ridge-reduced 1-D grid of 10^6 + 1 points, checked against a 2001^2 grid".into())
}

fn derive_michalewicz(d: usize) -> Entry {
    let (lo, hi) = (vec![0.0; d], vec![PI; d]);
    // The function is a sum of one-dimensional terms; minimize each separately.
    let mut x = Vec::with_capacity(d);
    for i in 1..=d {
        let n = 1_000_000;
        let (mut bt, mut bv) = (0.0, f64::INFINITY);
        for k in 0..=n {
            let t = PI * k as f64 / n as f64;
            let v = michalewicz_term(i, t);
            if v < bv {
                bt = t;
                bv = v;
            }
        }
        let g = |s: &[f64]| michalewicz_term(i, s[0]);
        let (t, _) = compass(&g, &[bt], &[0.0], &[PI], 1e-6, 1e-16);
        x.push(t[0]);
    }
    if d == 2 {
        assert!(michalewicz(&x) <= grid_min(&michalewicz, &lo, &hi, 2001));
    }
    finish("michalewicz", &michalewicz, lo, hi, vec![x], "standard box [0, pi]^d",
        "separable: each coordinate term on a 10^6 + 1 point grid refined by compass search".into())
}

fn derive_hartmann() -> Entry {
    let (lo, hi) = (vec![0.0; 6], vec![1.0; 6]);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut coarse: Vec<(Vec<f64>, f64)> =
        lhs(10_000, 6, &mut rng).into_iter().map(|x0| compass(&hartmann6, &x0, &lo, &hi, 0.05, 1e-4)).collect();
    coarse.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let found = coarse.into_iter().take(50).map(|(x0, _)| compass(&hartmann6, &x0, &lo, &hi, 1e-4, 1e-15)).collect();
    let (mins, _) = distinct_best(found, 1e-9);
    finish("hartmann6", &hartmann6, lo, hi, mins, "unit cube [0, 1]^6",
        "compass search from 10^4 LHS starts, best 50 refined to step 1e-15".into())
}

fn main() {
    let entries = [derive_ackley(), derive_branin(), derive_bukin(), derive_michalewicz(2), derive_michalewicz(10), derive_hartmann()];
    let mut out = String::new();
    writeln!(out, "# Generated by `cargo run --release -p owbo --example derive_fixtures`.").unwrap();
    writeln!(out, "# Domains follow standard benchmark conventions; minima are oracle-derived.").unwrap();
    for e in &entries {
        writeln!(out, "\n[[benchmark]]").unwrap();
        writeln!(out, "name = {:?}", e.name).unwrap();
        writeln!(out, "dim = {}", e.dim).unwrap();
        writeln!(out, "lower = {}", fmt_vec(&e.lower)).unwrap();
        writeln!(out, "upper = {}", fmt_vec(&e.upper)).unwrap();
        writeln!(out, "min_value = {:?}", e.min_value).unwrap();
        let ms: Vec<String> = e.minimizers.iter().map(|m| fmt_vec(m)).collect();
        writeln!(out, "minimizers = [{}]", ms.join(", ")).unwrap();
        writeln!(out, "domain_source = {:?}", e.domain_source).unwrap();
        writeln!(out, "oracle = {:?}", e.oracle).unwrap();
    }
    print!("{out}");
}
