#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod analyze;
mod args;
mod config;
mod exit;
mod output;
mod run;
mod softlabel;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};
use crate::config::resolve;
use crate::exit::{CliError, EXIT_OK, EXIT_USAGE};

fn dispatch(cli: Cli, matches: &clap::ArgMatches) -> Result<(), CliError> {
    let name = cli.command.name();
    let sub = matches
        .subcommand_matches(name)
        .expect("subcommand matches");
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::AnalyzeErrors(a) => analyze::run(&resolve(a, sub, cfg, name)?),
        Command::Softlabel(a) => softlabel::run(&resolve(a, sub, cfg, name)?),
        Command::Train(a) => run::train(&resolve(a, sub, cfg, name)?),
        Command::Eval(a) => run::eval(&resolve(a, sub, cfg, name)?),
        Command::Compare(a) => run::compare(&resolve(a, sub, cfg, name)?),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let code = match dispatch(cli, &matches) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("qscorer: {e}");
            if e.code() == EXIT_USAGE {
                eprintln!("run `qscorer --help` for usage");
            }
            e.code()
        }
    };
    ExitCode::from(code as u8)
}
