use clap::Parser;

use ckb_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(ckb_cli::run(&cli.command));
}
