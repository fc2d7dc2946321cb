use clap::Parser;
use qspline::cli::{main_with, RunConfig};

fn main() {
    std::process::exit(main_with(RunConfig::parse()));
}
