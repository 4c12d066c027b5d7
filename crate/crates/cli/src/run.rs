//! Seed batches: per-repeat CSV traces plus one JSON manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use owbo::bo::{self, RunOutput, TraceRecord};
use owbo::stats::{mad, median};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::format::{num, round_trip};
use crate::settings::RunSettings;
use crate::target::Target;

pub const CSV_HEADER: &str = "iter,simple_regret,distance,observation_regret,wall_seconds";

/// Per-iteration median, median absolute deviation and the plotted band (MAD / 4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: Vec<Option<f64>>,
    pub mad: Vec<Option<f64>>,
    pub band: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub iterations: Vec<usize>,
    pub simple_regret: Summary,
    pub distance: Summary,
    pub observation_regret: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: u64,
    pub csv: String,
    pub records: usize,
    pub failure: Option<String>,
    pub density_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub revision: String,
    pub created_unix: u64,
    pub config: RunSettings,
    pub repeats: Vec<RepeatRecord>,
    pub aggregate: Aggregate,
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub csv_paths: Vec<PathBuf>,
    /// Repeats whose run stopped early.
    pub failed: Vec<u64>,
}

impl RunReport {
    pub fn exit_code(&self) -> u8 {
        if self.failed.is_empty() {
            crate::error::exit::OK
        } else {
            crate::error::exit::PARTIAL
        }
    }
}

/// Source revision: `$OWBO_REVISION`, else `git describe`, else the package version.
pub fn revision() -> String {
    if let Ok(r) = std::env::var("OWBO_REVISION") {
        return r;
    }
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output();
    match git {
        Ok(o) if o.status.success() => {
            format!("{} ({})", env!("CARGO_PKG_VERSION"), String::from_utf8_lossy(&o.stdout).trim())
        }
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in trace {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter,
            num(r.simple_regret),
            num(r.distance),
            num(r.observation_regret),
            num(r.wall_seconds)
        ));
    }
    s
}

fn summarize(columns: &[Vec<f64>], len: usize) -> Summary {
    let mut out = Summary { median: Vec::with_capacity(len), mad: Vec::with_capacity(len), band: Vec::with_capacity(len) };
    for n in 0..len {
        let vals: Vec<f64> = columns.iter().filter_map(|c| c.get(n).copied()).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            out.median.push(None);
            out.mad.push(None);
            out.band.push(None);
        } else {
            let m = mad(&vals);
            out.median.push(Some(median(&vals)));
            out.mad.push(Some(m));
            out.band.push(Some(m / 4.0));
        }
    }
    out
}

/// Medians and MADs per iteration, from the values as written to CSV.
pub fn aggregate(traces: &[&[TraceRecord]], n_iter: usize) -> Aggregate {
    let len = n_iter + 1;
    let col = |f: fn(&TraceRecord) -> f64| -> Vec<Vec<f64>> {
        traces.iter().map(|t| t.iter().map(|r| round_trip(f(r))).collect()).collect()
    };
    Aggregate {
        iterations: (0..len).collect(),
        simple_regret: summarize(&col(|r| r.simple_regret), len),
        distance: summarize(&col(|r| r.distance), len),
        observation_regret: summarize(&col(|r| r.observation_regret), len),
    }
}

fn run_repeats(settings: &RunSettings, target: &Target) -> Result<Vec<RunOutput>, CliError> {
    let configs = (0..settings.repeats as u64)
        .map(|r| settings.experiment(target, r))
        .collect::<Result<Vec<_>, _>>()?;
    let truth = target.truth();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outputs = pool.install(|| {
        configs
            .par_iter()
            .map(|c| bo::run(c, target.objective(), truth.as_ref()))
            .collect::<Vec<_>>()
    });
    outputs.into_iter().map(|o| o.map_err(CliError::from)).collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Runs every repeat and writes `<stem>-rNNN.csv` files and `<stem>.json` under `settings.out`.
pub fn execute(settings: &RunSettings) -> Result<RunReport, CliError> {
    settings.validate()?;
    let target = Target::resolve(&settings.function, settings.dim)?;
    let outputs = run_repeats(settings, &target)?;

    fs::create_dir_all(&settings.out).map_err(|e| CliError::io(&settings.out, e))?;
    let stem = settings.stem();
    let mut csv_paths = Vec::new();
    let mut repeats = Vec::new();
    let mut failed = Vec::new();
    for (r, out) in outputs.iter().enumerate() {
        let name = format!("{stem}-r{r:03}.csv");
        let path = settings.out.join(&name);
        write_file(&path, &trace_csv(&out.trace))?;
        if out.failure.is_some() {
            failed.push(r as u64);
        }
        repeats.push(RepeatRecord {
            repeat: r as u64,
            csv: name,
            records: out.trace.len(),
            failure: out.failure.clone(),
            density_fallbacks: out.density_fallbacks,
        });
        csv_paths.push(path);
    }
    let traces: Vec<&[TraceRecord]> = outputs.iter().map(|o| o.trace.as_slice()).collect();
    let manifest = RunManifest {
        tool: format!("owbo {}", env!("CARGO_PKG_VERSION")),
        revision: revision(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: settings.clone(),
        repeats,
        aggregate: aggregate(&traces, settings.iters),
    };
    let manifest_path = settings.out.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&manifest_path, &(body + "\n"))?;
    Ok(RunReport { manifest, manifest_path, csv_paths, failed })
}

/// Parsed rows of a trace CSV: `(iter, simple_regret, distance, observation_regret, wall_seconds)`.
pub fn read_trace_csv(text: &str) -> Result<Vec<(usize, f64, f64, f64, f64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(format!("bad row {l:?}"));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
            Ok((f[0].parse().map_err(|e| format!("{e}"))?, p(f[1])?, p(f[2])?, p(f[3])?, p(f[4])?))
        })
        .collect()
}
