use clap::Parser;
use cqsw_cli::{commands, exit_code_for, Cli};

fn main() {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(failures) if failures.is_empty() => {}
        Ok(failures) => {
            for f in &failures {
                eprintln!("assertion failed: {f}");
            }
            std::process::exit(3);
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
