use std::process::ExitCode;

fn main() -> ExitCode {
    dld_forge::cli::dispatch(std::env::args_os())
}
