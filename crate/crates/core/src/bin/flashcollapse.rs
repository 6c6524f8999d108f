use std::process::ExitCode;

fn main() -> ExitCode {
    flashcollapse::cli::main_with_args(std::env::args_os())
}
