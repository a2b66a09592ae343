use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(cmrr_cli::commands::cmd_dispatch(&args) as u8)
}
