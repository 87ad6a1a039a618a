mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("mbg: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::SolveNe(a) => commands::solve_ne(a),
        Command::Regret(a) => commands::regret(a),
        Command::Table(a) => commands::table(a),
        Command::InspectData(a) => commands::inspect_data(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbg: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}
