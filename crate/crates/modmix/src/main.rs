use std::process::ExitCode;

fn main() -> ExitCode {
    modmix::cli::run()
}
