use std::process::ExitCode;

fn main() -> ExitCode {
    xri_cli::run(std::env::args_os())
}
