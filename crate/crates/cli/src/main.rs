use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lesion_cli::commands::{self, *};

/// Open-set skin-lesion decisions from classifier probability files.
#[derive(Debug, Parser)]
#[command(name = "lesion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Combine several models' probability files.
    Aggregate(AggregateArgs),
    /// Pick the n best models from a score table.
    SelectMembers(SelectMembersArgs),
    /// Fit the per-class entropy profile on validation outputs.
    CalibrateEntropy(CalibrateArgs),
    /// Flag samples that belong to none of the known classes.
    DetectUnknown(DetectArgs),
    /// Fit age/sex/region priors and per-class mean confidence.
    FitPriors(FitPriorsArgs),
    /// Re-rank low-confidence predictions with metadata priors.
    FuseMeta(FuseArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Inverse-frequency class weights.
    Weights(WeightsArgs),
    /// Write seeded synthetic fixtures.
    Synth(SynthArgs),
    /// Run every step from a config file.
    Pipeline(PipelineArgs),
}

fn run(command: &Command) -> lesion_cli::Result<String> {
    match command {
        Command::Aggregate(a) => commands::aggregate(a),
        Command::SelectMembers(a) => select_members(a),
        Command::CalibrateEntropy(a) => calibrate_entropy(a),
        Command::DetectUnknown(a) => detect_unknown(a),
        Command::FitPriors(a) => fit_priors_cmd(a),
        Command::FuseMeta(a) => fuse_meta(a),
        Command::Evaluate(a) => evaluate(a).map(|(_, table)| table),
        Command::Weights(a) => weights(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
