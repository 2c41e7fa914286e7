use std::process::ExitCode;

fn main() -> ExitCode {
    polarization::cli::main_with_args(std::env::args_os())
}
