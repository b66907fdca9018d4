use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde_json::Value;
use spatialprobe::probes::{
    attention_share, cmb_heatmap, entropy_table, norm_profile, psi, rope_sensitivity_curve, EntropyMode, PsiReport,
    StepAggregation,
};
use spatialprobe::trace_io::{read_tensors, read_trace, TraceFile};

use crate::error::{read_string, CliError};
use crate::output::ReportArgs;

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Subcommand)]
pub enum ProbeCommand {
    /// Position sensitivity index from two accuracy files.
    Psi {
        /// Accuracy with vision tokens in their original order.
        #[arg(long)]
        orig: PathBuf,
        /// Accuracy with vision tokens shuffled.
        #[arg(long)]
        perm: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Cross-modality balance per layer and head.
    Cmb {
        #[command(flatten)]
        args: TraceArgs,
        /// Count system-prompt tokens as text.
        #[arg(long)]
        include_system: bool,
        /// Average every captured query step instead of the first.
        #[arg(long)]
        all_steps: bool,
    },
    /// Vision-attention response to shifting the vision keys.
    Rope {
        #[command(flatten)]
        args: TraceArgs,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        all_steps: bool,
    },
    /// Normalised entropy of attention over vision tokens.
    Entropy {
        #[command(flatten)]
        args: TraceArgs,
        /// Entropy per query row, then averaged.
        #[arg(long)]
        per_row: bool,
    },
    /// Vision and text residual norms per layer.
    Norms {
        /// Trace file carrying hidden states.
        #[arg(long, conflicts_with = "tensors", required_unless_present = "tensors")]
        trace: Option<PathBuf>,
        /// Tensor file with one hidden-state matrix per layer and a partition.
        #[arg(long)]
        tensors: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Attention share of system, vision and text tokens.
    Share {
        #[command(flatten)]
        args: TraceArgs,
    },
}

fn load(path: &Path) -> Result<TraceFile, CliError> {
    let (file, rep) = read_trace(path)?;
    if rep.renormalized_rows > 0 {
        println!("renormalized {} attention rows", rep.renormalized_rows);
    }
    Ok(file)
}

/// A bare number, an object with an `accuracy` field, or a 2DS evaluation
/// report (its overall row is used).
fn read_accuracy(path: &Path) -> Result<f64, CliError> {
    let v: Value = serde_json::from_str(&read_string(path)?)?;
    let found = match &v {
        Value::Number(n) => n.as_f64(),
        Value::Object(m) => m.get("accuracy").and_then(Value::as_f64),
        Value::Array(rows) => rows
            .iter()
            .find(|r| r.get("category").and_then(Value::as_str) == Some("Overall Acc."))
            .and_then(|r| r.get("accuracy"))
            .and_then(Value::as_f64),
        _ => None,
    };
    found.ok_or_else(|| CliError::Input(format!("{}: no accuracy value found", path.display())))
}

fn steps(all: bool) -> StepAggregation {
    if all {
        StepAggregation::AllSteps
    } else {
        StepAggregation::FirstStep
    }
}

pub fn run(cmd: ProbeCommand) -> Result<(), CliError> {
    match cmd {
        ProbeCommand::Psi { orig, perm, report } => {
            let (o, p) = (read_accuracy(&orig)?, read_accuracy(&perm)?);
            let r = PsiReport {
                acc_original: o,
                acc_permuted: p,
                psi: psi(o, p)?,
            };
            println!("psi {:.4} ({o} -> {p})", r.psi);
            report.emit(&r)
        }
        ProbeCommand::Cmb {
            args,
            include_system,
            all_steps,
        } => {
            let f = load(&args.trace)?;
            let h = cmb_heatmap(&f.trace, &f.partition, include_system, steps(all_steps))?;
            let v = h.values.as_slice();
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            println!("cmb over {} heads: mean {mean:.4}", v.len());
            args.report.emit(&h)
        }
        ProbeCommand::Rope { args, delta, all_steps } => {
            let f = load(&args.trace)?;
            let c = rope_sensitivity_curve(&f.trace, &f.partition, delta, &f.rope, steps(all_steps))?;
            for s in &c.layers {
                println!("layer {:>3}: |dalpha_V| {:.4e}  |dg_V| {:.4e}", s.layer, s.abs_delta_alpha_v, s.abs_delta_g_v);
            }
            args.report.emit(&c)
        }
        ProbeCommand::Entropy { args, per_row } => {
            let f = load(&args.trace)?;
            let mode = if per_row { EntropyMode::PerRow } else { EntropyMode::AveragedRows };
            let t = entropy_table(&f.trace, &f.partition, mode)?;
            println!("vision entropy: overall {:.4}", t.overall);
            args.report.emit(&t)
        }
        ProbeCommand::Norms { trace, tensors, report } => {
            let profile = match (trace, tensors) {
                (Some(p), _) => {
                    let f = load(&p)?;
                    let hidden = f
                        .hidden
                        .ok_or_else(|| CliError::Input(format!("{} has no hidden states", p.display())))?;
                    norm_profile(&hidden, &f.partition)?
                }
                (None, Some(p)) => {
                    let t = read_tensors(&p)?;
                    let partition = t
                        .partition
                        .clone()
                        .ok_or_else(|| CliError::Input(format!("{} has no partition", p.display())))?;
                    norm_profile(&t.matrices(), &partition)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            for l in &profile.layers {
                let ratio = l.ratio.map_or("-".into(), |r| format!("{r:.3}"));
                println!("layer {:>3}: vision {:.4} text {:.4} ratio {ratio}", l.layer, l.vision_mean, l.text_mean);
            }
            report.emit(&profile)
        }
        ProbeCommand::Share { args } => {
            let f = load(&args.trace)?;
            let s = attention_share(&f.trace, &f.partition)?;
            println!("system {:.4} vision {:.4} text {:.4}", s.system, s.vision, s.text);
            args.report.emit(&s)
        }
    }
}
