use clap::Parser;
use nildyn::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
