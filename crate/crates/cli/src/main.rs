use std::process::ExitCode;

use clap::Parser;
use docs2oas_cli::{init_logging, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(docs2oas_cli::EXIT_USAGE)
        }
    }
}
