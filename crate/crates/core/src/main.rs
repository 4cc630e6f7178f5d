use std::process::ExitCode;

fn main() -> ExitCode {
    sweepctl::cli::main_with(std::env::args_os())
}
