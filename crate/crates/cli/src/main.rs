use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use poisson_ntt_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = run(&cli);
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(outcome.output.as_bytes());
    let _ = stdout.flush();
    ExitCode::from(outcome.code)
}
