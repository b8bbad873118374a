// SPDX-License-Identifier: MIT OR Apache-2.0

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = causelens_cli::Cli::parse();
    match causelens_cli::run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
