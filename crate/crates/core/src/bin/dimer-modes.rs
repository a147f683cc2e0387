use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use dimer_modes::experiments::{error_json, resolve, run, Cli, OUT_DIR_ENV};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            eprintln!("{}", error_json("invalid-geometry", 2, &e.kind().to_string()));
            return ExitCode::from(2);
        }
    };
    let env_dir = std::env::var(OUT_DIR_ENV).ok();
    match resolve(&cli.command, env_dir.as_deref()).and_then(|inv| run(&inv)) {
        Ok(outcome) => {
            for name in &outcome.files {
                println!("{}", outcome.out_dir.join(name).display());
            }
            println!("{}", outcome.out_dir.join(dimer_modes::experiments::MANIFEST_NAME).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_json(e.category(), code, &e.to_string()));
            ExitCode::from(code as u8)
        }
    }
}
