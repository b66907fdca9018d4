mod dataset;
mod error;
mod intervene;
mod output;
mod probe;
mod toy;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;
use output::ReportArgs;

#[derive(Parser)]
#[command(name = "spatialprobe", version, about = "Positional-sensitivity probes for multimodal attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the 2DS corpus.
    Gen2ds(dataset::GenArgs),
    /// Score predictions against a 2DS corpus.
    Eval2ds(dataset::EvalArgs),
    /// Run the toy decoder.
    #[command(subcommand)]
    Toy(toy::ToyCommand),
    /// Probes over trace files.
    #[command(subcommand)]
    Probe(probe::ProbeCommand),
    /// Representation-level interventions on tensor files.
    #[command(subcommand)]
    Intervene(intervene::InterveneCommand),
    /// Numerical checks of the attention-derivative identities.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Phase-derivative identity, factorization order and residual suppression.
    AppendixA {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
}

fn verify(cmd: VerifyCommand) -> Result<(), CliError> {
    let VerifyCommand::AppendixA { trials, seed, report } = cmd;
    let r = spatialprobe::verify::appendix_a(trials, seed)?;
    let verdict = |ok: bool| if ok { "ok" } else { "FAILED" };
    println!(
        "identity: {} trials, max relative error {:.3e} ({})",
        r.identity.trials,
        r.identity.max_rel_error,
        verdict(r.identity_ok())
    );
    println!(
        "factorization: {} instances, log-log slope {:.4} ({})",
        r.factorization.instances,
        r.factorization.aggregate_slope,
        verdict(r.factorization_ok())
    );
    println!(
        "suppression: {} instances, ratio {:.6}..{:.6} ({})",
        r.suppression.instances,
        r.suppression.min_ratio,
        r.suppression.max_ratio,
        verdict(r.suppression_ok())
    );
    report.emit(&r)?;
    if !r.passed() {
        return Err(CliError::Check("appendix-a checks failed".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen2ds(a) => dataset::gen2ds(a),
        Command::Eval2ds(a) => dataset::eval2ds(a),
        Command::Toy(c) => toy::run(c),
        Command::Probe(c) => probe::run(c),
        Command::Intervene(c) => intervene::run(c),
        Command::Verify(c) => verify(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return error::report(&CliError::Usage(e.to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => error::report(&e),
    }
}
