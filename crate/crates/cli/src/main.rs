use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use dkappa_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli, std::env::args().collect()) {
        Ok(out) => {
            if !out.converged {
                eprintln!(
                    "warning: geodesic iteration did not converge; results in {} are flagged",
                    out.output_dir.display()
                );
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
