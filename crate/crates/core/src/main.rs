use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(karyodet::cli::run())
}
