//! Experiment settings from a `key = value` file overridden by flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use owbo::acquisition::{AcquisitionKind, AcquisitionSpec};
use owbo::problem::{ExperimentConfig, ObjectiveId};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::target::Target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub function: String,
    pub dim: usize,
    pub acq: AcquisitionKind,
    pub iters: usize,
    /// `None` uses 3 points in two dimensions and 10 otherwise.
    pub init: Option<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub noise: f64,
    pub ngmm: usize,
    pub nsamples: usize,
    pub nfit: usize,
    pub kappa: f64,
    pub xi: f64,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            function: "ackley".into(),
            dim: 2,
            acq: AcquisitionKind::LcbLw,
            iters: 60,
            init: None,
            repeats: 20,
            seed: 0,
            noise: 1e-3,
            ngmm: 2,
            nsamples: 100_000,
            nfit: 10_000,
            kappa: 1.0,
            xi: 0.01,
            out: PathBuf::from("results"),
            jobs: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {key} = {value:?}")))
}

/// Parses a numeric value; accepts forms such as `1e5` for integer settings.
pub fn parse_count(key: &str, value: &str) -> Result<usize, CliError> {
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = parse(key, value)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!("{key} must be a nonnegative integer, got {value:?}")))
    }
}

impl RunSettings {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "function" => self.function = value.to_string(),
            "dim" => self.dim = parse_count(key, value)?,
            "acq" | "acquisition" => {
                self.acq = value.parse().map_err(|e: owbo::Error| CliError::Config(e.to_string()))?
            }
            "iters" | "n_iter" => self.iters = parse_count(key, value)?,
            "init" | "n_init" => self.init = Some(parse_count(key, value)?),
            "repeats" => self.repeats = parse_count(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "noise" | "noise_variance" => self.noise = parse(key, value)?,
            "ngmm" | "n_gmm" => self.ngmm = parse_count(key, value)?,
            "nsamples" | "n_samples_kde" => self.nsamples = parse_count(key, value)?,
            "nfit" | "n_fit_samples" => self.nfit = parse_count(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "jobs" => self.jobs = parse_count(key, value)?,
            _ => return Err(CliError::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config text: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> AcquisitionSpec {
        AcquisitionSpec { kind: self.acq, xi: self.xi, kappa: self.kappa }
    }

    /// Experiment configuration for one repeat against `target`.
    pub fn experiment(&self, target: &Target, repeat: u64) -> Result<ExperimentConfig, CliError> {
        let domain = target.domain().clone();
        let mut c = ExperimentConfig::new(
            ObjectiveId { name: target.name().to_string(), dim: domain.dim() },
            domain,
            self.spec(),
        );
        c.prior = target.prior();
        c.n_iter = self.iters;
        if let Some(n) = self.init {
            c.n_init = n;
        }
        c.noise_variance = self.noise;
        c.n_gmm = self.ngmm;
        c.n_samples_kde = self.nsamples;
        c.n_fit_samples = self.nfit;
        c.seed = self.seed;
        c.repeat = repeat;
        c.validate()?;
        Ok(c)
    }

    /// File stem shared by the per-repeat CSVs and the manifest.
    pub fn stem(&self) -> String {
        format!("{}-d{}-{}", self.function.to_ascii_lowercase(), self.dim, self.acq)
    }
}
