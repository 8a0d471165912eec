use clap::Parser;
use spikedet::{execute, Cli};

fn main() {
    std::process::exit(execute(&Cli::parse()));
}
