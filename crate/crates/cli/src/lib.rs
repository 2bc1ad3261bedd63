//! Command-line front end: one subcommand per pipeline stage, each writing a
//! run manifest next to its outputs.

pub mod cli;
pub mod commands;
pub mod manifest;
pub mod server;

use serde_json::json;
use triadcal_core::Error;

use crate::cli::{Cli, Command, TriadsCommand};
use crate::manifest::Recorder;

/// Exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const SCHEMA: i32 = 4;
    pub const MALFORMED: i32 = 5;
    pub const INVALID_INPUT: i32 = 6;
    pub const COMPUTATION: i32 = 7;
    pub const SERVICE: i32 = 8;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => exit::IO,
        Error::SchemaMismatch { .. } => exit::SCHEMA,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => exit::MALFORMED,
        Error::Degenerate(_)
        | Error::ZeroInformation { .. }
        | Error::ZeroVariance(_)
        | Error::NoTriads(_)
        | Error::TooLarge(_)
        | Error::OverRequest { .. }
        | Error::Overlap(_) => exit::COMPUTATION,
        Error::UnknownSession(_) | Error::SessionComplete(_) | Error::StaleItem { .. } | Error::InvalidChoice(_) => exit::SERVICE,
        _ => exit::INVALID_INPUT,
    }
}

/// Structured error report printed to stderr.
pub fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) } }).to_string()
}

pub fn run(cli: Cli, arguments: Vec<String>) -> Result<(), Error> {
    match &cli.command {
        Command::Triads(TriadsCommand::Build(args)) => commands::triads_build(args, Recorder::new("triads build", arguments)),
        Command::Triads(TriadsCommand::Audit(args)) => commands::triads_audit(args, Recorder::new("triads audit", arguments)),
        Command::Fit(args) => commands::fit(args, Recorder::new("fit", arguments)),
        Command::Score(args) => commands::score(args, Recorder::new("score", arguments)),
        Command::Subset(args) => commands::subset(args, Recorder::new("subset", arguments)),
        Command::Simulate(args) => commands::simulate(args, Recorder::new("simulate", arguments)),
        Command::Analyze(cmd) => commands::analyze(cmd, Recorder::new("analyze", arguments)),
        Command::Serve(args) => {
            let mut config = server::ServeConfig::load(&args.config)?;
            if let Some(port) = args.port {
                config.port = port;
            }
            if let Some(dir) = &args.data_dir {
                config.data_dir = dir.clone();
            }
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Io {
                    path: "<runtime>".into(),
                    source: e,
                })?;
            runtime.block_on(server::serve(config))
        }
    }
}
