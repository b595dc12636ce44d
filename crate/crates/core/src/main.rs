use std::process::ExitCode;

fn main() -> ExitCode {
    chaoscrack::cli::main_with_args(std::env::args_os())
}
