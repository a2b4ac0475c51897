mod args;
mod commands;
mod manifest;
mod tsv;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use rise_core::RiseError;

use args::{Cli, Command};

/// 1 for bad arguments or inputs that fail validation, 2 for unreadable or damaged files.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RiseError>() {
            return if e.is_io_or_corruption() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic_cmd(a),
        Command::BuildIndex(a) => commands::build_index_cmd(a),
        Command::Query(a) => commands::query_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Diagnose(a) => commands::diagnose_cmd(a),
        Command::Varbench(a) => commands::varbench_cmd(a),
        Command::IndexStats(a) => commands::index_stats_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
