//! `pscd` binary entry point; all behavior lives in [`pscd::cli`].

use clap::Parser;

fn main() {
    let cli = pscd::cli::Cli::parse();
    if let Err(err) = pscd::cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
