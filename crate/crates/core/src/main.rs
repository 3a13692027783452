use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(calib_core::cli::run(std::env::args_os()))
}
