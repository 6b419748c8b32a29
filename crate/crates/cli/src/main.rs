use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hirec_cli::{run, Cli, EXIT_INPUT, EXIT_OK};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(run(cli) as u8)
}
