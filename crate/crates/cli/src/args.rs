//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use owbo::acquisition::AcquisitionKind;

use crate::bench::{BenchSpec, SweepParam};
use crate::error::CliError;
use crate::pdf::PdfSpec;
use crate::settings::{parse_count, RunSettings};

#[derive(Debug, Parser)]
#[command(name = "owbo", version, about = "Output-weighted Bayesian optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seeded repeats and write per-repeat CSV traces plus a JSON manifest.
    Run(RunArgs),
    /// Time single loop iterations across a parameter sweep.
    Bench(BenchArgs),
    /// Write the output density of a benchmark under uniform input.
    Pdf(PdfArgs),
    /// List objectives and acquisition functions.
    List,
}

/// Experiment flags. Values given here override the config file.
#[derive(Debug, Args, Default)]
pub struct ExperimentFlags {
    /// `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// pi, ei, lcb, lcb-lw, ivr, ivr-bo, ivr-lw or ivr-lwbo.
    #[arg(long)]
    pub acq: Option<String>,
    #[arg(long)]
    pub iters: Option<String>,
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub repeats: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Noise variance relative to the output variance.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub ngmm: Option<String>,
    #[arg(long)]
    pub nsamples: Option<String>,
    #[arg(long)]
    pub nfit: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub xi: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
}

impl ExperimentFlags {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 14] = [
            ("function", &self.function),
            ("dim", &self.dim),
            ("acq", &self.acq),
            ("iters", &self.iters),
            ("init", &self.init),
            ("repeats", &self.repeats),
            ("seed", &self.seed),
            ("noise", &self.noise),
            ("ngmm", &self.ngmm),
            ("nsamples", &self.nsamples),
            ("nfit", &self.nfit),
            ("kappa", &self.kappa),
            ("xi", &self.xi),
            ("jobs", &self.jobs),
        ];
        fields.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }

    /// Defaults, then the config file, then explicit flags.
    pub fn settings(&self, mut base: RunSettings) -> Result<RunSettings, CliError> {
        if let Some(path) = &self.config {
            base.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            base.set(k, v)?;
        }
        Ok(base)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub flags: ExperimentFlags,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn settings(&self) -> Result<RunSettings, CliError> {
        let mut s = self.flags.settings(RunSettings::default())?;
        if let Some(out) = &self.out {
            s.out = out.clone();
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub flags: ExperimentFlags,
    /// Parameter to sweep: nsamples, ngmm or dim.
    #[arg(long, default_value = "ngmm")]
    pub sweep: String,
    /// Comma-separated sweep values.
    #[arg(long, default_value = "1,2,4,8")]
    pub values: String,
    /// Comma-separated acquisition kinds; overrides --acq.
    #[arg(long)]
    pub acqs: Option<String>,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Timing defaults: ten initial points, twenty timed repeats, 1e6 KDE samples.
pub fn bench_defaults() -> RunSettings {
    RunSettings { init: Some(10), repeats: 20, nsamples: 1_000_000, acq: AcquisitionKind::IvrLwbo, ..RunSettings::default() }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(f).collect()
}

impl BenchArgs {
    pub fn spec(&self) -> Result<BenchSpec, CliError> {
        let base = self.flags.settings(bench_defaults())?;
        let param = SweepParam::parse(&self.sweep)?;
        let values = parse_list(&self.values, |v| parse_count("values", v))?;
        let acqs = match &self.acqs {
            Some(list) => parse_list(list, |v| v.parse().map_err(|e: owbo::Error| CliError::Config(e.to_string())))?,
            None => vec![base.acq],
        };
        Ok(BenchSpec { base, param, values, acqs, out: self.out.clone() })
    }
}

#[derive(Debug, Args)]
pub struct PdfArgs {
    #[arg(long, default_value = "ackley")]
    pub function: String,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Uniform input samples; 1e5 in two dimensions and 1e6 otherwise.
    #[arg(long)]
    pub nsamples: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl PdfArgs {
    pub fn spec(&self) -> Result<PdfSpec, CliError> {
        let nsamples = self.nsamples.as_deref().map(|v| parse_count("nsamples", v)).transpose()?;
        Ok(PdfSpec { function: self.function.clone(), dim: self.dim, nsamples, seed: self.seed, out: self.out.clone() })
    }
}
