//! `forage`: train, evaluate, probe and ablate Foraging Games populations.

mod cmd;
mod exit;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "forage", version, about = "Foraging Games emergent-communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a population from a config file.
    Train(cmd::train::Args),
    /// Evaluate a checkpoint: SR, LS, IC, topsim and distance curves.
    Eval(cmd::eval::Args),
    /// Decode item attributes from a checkpoint's messages.
    Probe(cmd::probe::Args),
    /// Ablation tables over vocabulary, grid size, obstacles or channels.
    Ablate(cmd::ablate::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = run::configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(exit::CONFIG);
    }
    let result = match cli.command {
        Command::Train(a) => cmd::train::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Probe(a) => cmd::probe::run(a),
        Command::Ablate(a) => cmd::ablate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
