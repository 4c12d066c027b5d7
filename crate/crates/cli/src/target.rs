//! Objectives the runner knows by name.

use owbo::benchfns::{self, Benchmark};
use owbo::bo::{Objective, Truth};
use owbo::precursor::PrecursorObjective;
use owbo::problem::{Domain, InputPrior};

use crate::error::CliError;

pub const PRECURSOR: &str = "precursor";

pub enum Target {
    Bench(Benchmark),
    Precursor(PrecursorObjective),
}

impl Target {
    pub fn resolve(name: &str, dim: usize) -> Result<Self, CliError> {
        if name.eq_ignore_ascii_case(PRECURSOR) {
            if dim != 2 {
                return Err(CliError::Config("the precursor objective is two-dimensional".into()));
            }
            return Ok(Target::Precursor(PrecursorObjective::standard()?));
        }
        Ok(Target::Bench(benchfns::make(name, dim)?))
    }

    pub fn name(&self) -> &str {
        match self {
            Target::Bench(b) => b.name(),
            Target::Precursor(_) => PRECURSOR,
        }
    }

    pub fn domain(&self) -> &Domain {
        match self {
            Target::Bench(b) => b.domain(),
            Target::Precursor(p) => p.domain(),
        }
    }

    pub fn prior(&self) -> InputPrior {
        match self {
            Target::Bench(b) => InputPrior::uniform(b.domain().clone()),
            Target::Precursor(p) => p.prior(),
        }
    }

    pub fn truth(&self) -> Option<Truth> {
        match self {
            Target::Bench(b) => Some(b.truth()),
            Target::Precursor(_) => None,
        }
    }

    pub fn objective(&self) -> &dyn Objective {
        match self {
            Target::Bench(b) => b,
            Target::Precursor(p) => p,
        }
    }
}
