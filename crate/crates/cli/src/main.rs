// SPDX-License-Identifier: Apache-2.0

use clap::error::ErrorKind;
use clap::Parser;
use netreason_cli::{run, Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text).trim_end();
            let err = CliError::usage(text);
            eprintln!("{}", err.line());
            std::process::exit(err.exit_code());
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
