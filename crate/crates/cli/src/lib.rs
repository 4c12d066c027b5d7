//! Experiment runner for `owbo`: seeded batches, timing sweeps and output densities.

pub mod args;
pub mod bench;
pub mod error;
pub mod format;
pub mod pdf;
pub mod run;
pub mod settings;
pub mod target;

use clap::Parser;
use owbo::acquisition::AcquisitionKind;
use owbo::benchfns::Function;

use crate::args::{Cli, Command};
use crate::error::{exit, CliError};

fn list() -> String {
    let mut s = String::from("functions:\n");
    for f in Function::ALL {
        match f.fixed_dim() {
            Some(d) => s.push_str(&format!("  {} (d = {d})\n", f.name())),
            None => s.push_str(&format!("  {}\n", f.name())),
        }
    }
    s.push_str(&format!("  {} (d = 2)\nacquisitions:\n", target::PRECURSOR));
    for k in AcquisitionKind::ALL {
        s.push_str(&format!("  {k}\n"));
    }
    s
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Run(a) => {
            let report = run::execute(&a.settings()?)?;
            eprintln!("wrote {}", report.manifest_path.display());
            if !report.failed.is_empty() {
                eprintln!("failed repeats: {:?}", report.failed);
            }
            Ok(report.exit_code())
        }
        Command::Bench(a) => {
            bench::execute(&a.spec()?)?;
            Ok(exit::OK)
        }
        Command::Pdf(a) => {
            pdf::execute(&a.spec()?)?;
            Ok(exit::OK)
        }
        Command::List => {
            print!("{}", list());
            Ok(exit::OK)
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_entry<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("owbo: {e}");
            e.exit_code()
        }
    }
}
