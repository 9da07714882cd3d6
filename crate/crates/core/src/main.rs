use std::process::ExitCode;

fn main() -> ExitCode {
    thouless_pump::cli::main_from(std::env::args_os())
}
