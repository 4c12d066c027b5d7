use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(owbo_cli::main_entry(std::env::args_os()))
}
