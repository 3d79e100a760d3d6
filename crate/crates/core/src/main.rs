use std::process::ExitCode;

use adgan::cli::{exit_code, run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = format!("{:?}", cli.command).split('(').next().unwrap_or("").to_lowercase();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{:#}", anyhow::Error::new(e).context(format!("adgan {name} failed")));
            ExitCode::from(code)
        }
    }
}
