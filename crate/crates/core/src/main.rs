use std::process::ExitCode;

fn main() -> ExitCode {
    replenish::cli::main_from_args(std::env::args_os())
}
