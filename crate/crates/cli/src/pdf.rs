//! Output densities under uniform input.

use std::fs;
use std::path::PathBuf;

use owbo::benchfns::{self, output_pdf};
use owbo::density::Kde1d;
use owbo::rng::{Purpose, Streams};

use crate::error::CliError;
use crate::format::num;

pub const CSV_HEADER: &str = "value,density";

#[derive(Debug, Clone)]
pub struct PdfSpec {
    pub function: String,
    pub dim: usize,
    /// `None` uses 1e5 samples in two dimensions and 1e6 otherwise.
    pub nsamples: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn default_samples(dim: usize) -> usize {
    if dim <= 2 {
        100_000
    } else {
        1_000_000
    }
}

/// Output KDE and the benchmark's global minimum.
pub fn compute(spec: &PdfSpec) -> Result<(Kde1d, f64), CliError> {
    let bench = benchfns::make(&spec.function, spec.dim)?;
    let n = spec.nsamples.unwrap_or_else(|| default_samples(bench.dim()));
    let mut rng = Streams::new(spec.seed, 0).get(Purpose::KdeSampling, 0);
    Ok((output_pdf(&bench, n, &mut rng)?, bench.true_min_value()))
}

/// The KDE on a grid of the same length that starts no lower than `floor`.
pub fn clipped_grid(kde: &Kde1d, floor: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = kde.support();
    let lo = lo.max(floor);
    let m = kde.len();
    let step = (hi - lo) / (m - 1) as f64;
    (0..m)
        .map(|i| {
            let y = if i + 1 == m { hi } else { lo + i as f64 * step };
            (y, kde.eval(y))
        })
        .collect()
}

pub fn kde_csv(kde: &Kde1d, floor: f64) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (v, p) in clipped_grid(kde, floor) {
        s.push_str(&format!("{},{}\n", num(v), num(p)));
    }
    s
}

pub fn execute(spec: &PdfSpec) -> Result<Kde1d, CliError> {
    let (kde, floor) = compute(spec)?;
    let body = kde_csv(&kde, floor);
    match &spec.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(path, body).map_err(|e| CliError::io(path, e))?;
        }
        None => print!("{body}"),
    }
    Ok(kde)
}
