//! Single-iteration timing sweeps.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use owbo::acquisition::AcquisitionKind;
use owbo::bo::BoLoop;
use owbo::stats::median;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::format::num;
use crate::settings::RunSettings;
use crate::target::Target;

pub const CSV_HEADER: &str = "param,value,acq,median_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    NSamples,
    NGmm,
    Dim,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nsamples" | "n_samples" | "n_samples_kde" => Ok(SweepParam::NSamples),
            "ngmm" | "n_gmm" => Ok(SweepParam::NGmm),
            "dim" | "d" => Ok(SweepParam::Dim),
            _ => Err(CliError::Config(format!("cannot sweep over {s:?}; use nsamples, ngmm or dim"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NSamples => "n_samples",
            SweepParam::NGmm => "n_gmm",
            SweepParam::Dim => "d",
        }
    }

    fn apply(self, s: &mut RunSettings, v: usize) {
        match self {
            SweepParam::NSamples => s.nsamples = v,
            SweepParam::NGmm => s.ngmm = v,
            SweepParam::Dim => s.dim = v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Base settings; `repeats` is the number of timed repeats per cell.
    pub base: RunSettings,
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub acqs: Vec<AcquisitionKind>,
    /// CSV destination; `None` prints to stdout.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub param: SweepParam,
    pub value: usize,
    pub acq: AcquisitionKind,
    pub median_seconds: f64,
}

/// Wall time of the first loop iteration after the initial design is fitted.
pub fn time_one_iteration(settings: &RunSettings, target: &Target, repeat: u64) -> Result<f64, CliError> {
    let mut cfg = settings.experiment(target, repeat)?;
    cfg.n_iter = cfg.n_iter.max(1);
    let truth = target.truth();
    let mut bo = BoLoop::new(&cfg, target.objective(), truth.as_ref())?;
    bo.initialize()?;
    let t = Instant::now();
    bo.step()?;
    Ok(t.elapsed().as_secs_f64())
}

/// One untimed pass over the first cell; early iterations in a fresh process run slow.
fn warm_up(spec: &BenchSpec) -> Result<(), CliError> {
    let mut s = spec.base.clone();
    spec.param.apply(&mut s, spec.values[0]);
    s.acq = spec.acqs[0];
    let target = Target::resolve(&s.function, s.dim)?;
    for r in 0..s.repeats as u64 {
        time_one_iteration(&s, &target, r)?;
    }
    Ok(())
}

/// Runs the sweep serially so timings do not compete for cores.
///
/// Repeats are interleaved across cells so slow drift in the process affects every cell alike.
pub fn sweep(spec: &BenchSpec) -> Result<Vec<BenchRow>, CliError> {
    spec.base.validate()?;
    if spec.values.is_empty() || spec.acqs.is_empty() {
        return Err(CliError::Config("bench needs at least one sweep value and one acquisition".into()));
    }
    let mut cells = Vec::new();
    for &value in &spec.values {
        let mut s = spec.base.clone();
        spec.param.apply(&mut s, value);
        for &acq in &spec.acqs {
            s.acq = acq;
            cells.push((value, s.clone(), Target::resolve(&s.function, s.dim)?));
        }
    }
    warm_up(spec)?;
    let mut times = vec![Vec::with_capacity(spec.base.repeats); cells.len()];
    for r in 0..spec.base.repeats as u64 {
        for ((_, s, target), t) in cells.iter().zip(&mut times) {
            t.push(time_one_iteration(s, target, r)?);
        }
    }
    Ok(cells
        .iter()
        .zip(&times)
        .map(|((value, s, _), t)| BenchRow { param: spec.param, value: *value, acq: s.acq, median_seconds: median(t) })
        .collect())
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.param.name(), r.value, r.acq, num(r.median_seconds)));
    }
    s
}

pub fn execute(spec: &BenchSpec) -> Result<Vec<BenchRow>, CliError> {
    let rows = sweep(spec)?;
    let body = rows_csv(&rows);
    match &spec.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(path, body).map_err(|e| CliError::io(path, e))?;
        }
        None => print!("{body}"),
    }
    Ok(rows)
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}
