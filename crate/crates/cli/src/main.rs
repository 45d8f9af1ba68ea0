use std::io;
use std::process::ExitCode;

use clap::Parser;
use hchain_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(&cli, &mut io::stdout().lock());
    ExitCode::from(code as u8)
}
