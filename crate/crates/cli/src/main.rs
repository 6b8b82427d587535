//! Command-line front end for the trawl-footage pipeline: synthesize a
//! dataset, split it, train and score the models, and audit what they
//! actually learned.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod artifacts;
mod audit;
mod eval;
mod explain;
mod gen;
mod report;
mod split;
mod train;

#[derive(Parser)]
#[command(name = "trawlnet", version, about = "Trawl-footage action recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic trawl dataset with plantable biases
    Gen(gen::GenArgs),
    /// Draw per-class train/val/test splits from a manifest
    Split(split::SplitArgs),
    /// Train a model on one split
    Train(train::TrainArgs),
    /// Score a trained run on a subset and write a JSON report
    Eval(eval::EvalArgs),
    /// Write activation maps and overlays for one clip
    Explain(explain::ExplainArgs),
    /// Audit a dataset and its evaluations for shortcut learning
    Audit(audit::AuditArgs),
    /// Render figures from stored histories and audit reports
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match &cli.cmd {
        Cmd::Gen(args) => ("gen", gen::run(args)),
        Cmd::Split(args) => ("split", split::run(args)),
        Cmd::Train(args) => ("train", train::run(args)),
        Cmd::Eval(args) => ("eval", eval::run(args)),
        Cmd::Explain(args) => ("explain", explain::run(args)),
        Cmd::Audit(args) => ("audit", audit::run(args)),
        Cmd::Report(args) => ("report", report::run(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trawlnet {name}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
