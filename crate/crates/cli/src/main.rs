use clap::Parser;
use triadcal_cli::cli::Cli;
use triadcal_cli::{error_json, exit_code, run};

fn main() {
    let arguments: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    if let Err(e) = run(cli, arguments) {
        eprintln!("{}", error_json(&e));
        std::process::exit(exit_code(&e));
    }
}
