use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use trialsearch_cli::commands::load_config;
use trialsearch_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = cli
        .log_level
        .clone()
        .or_else(|| load_config(cli.config.as_deref()).ok().map(|c| c.log_level))
        .unwrap_or_else(|| "info".into());
    env_logger::Builder::new().parse_filters(&level).init();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            let _ = stdout.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
