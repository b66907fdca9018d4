use std::path::PathBuf;

use clap::{Args, Subcommand};
use spatialprobe::interventions::{avg_pool_compress, multilayer_concat, normalize_vision, NormCalibration};
use spatialprobe::tensor::rms;
use spatialprobe::trace_io::{read_tensors, write_tensors, TensorFile};
use spatialprobe::{Matrix, TokenGroup};

use crate::error::CliError;

#[derive(Args, Debug)]
pub struct Io {
    /// Input tensor file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
pub enum InterveneCommand {
    /// Rescale vision rows to a target RMS.
    Normalize {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value = "embeddings")]
        tensor: String,
        #[arg(long, conflicts_with = "from_text")]
        target_rms: Option<f64>,
        /// Use the mean RMS of the text rows as the target.
        #[arg(long)]
        from_text: bool,
    },
    /// Average-pool a square grid of tokens.
    Compress {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        tensor: String,
        /// Number of output tokens; must be a square.
        #[arg(long)]
        target: usize,
    },
    /// Concatenate encoder layers and project them.
    Multilayer {
        #[command(flatten)]
        io: Io,
        /// Feature tensors to concatenate, in order.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<String>,
        #[arg(long)]
        projector: String,
        /// Name of the output tensor.
        #[arg(long, default_value = "features")]
        name: String,
    },
}

fn tensor<'a>(f: &'a TensorFile, name: &str) -> Result<&'a Matrix, CliError> {
    f.get(name)
        .ok_or_else(|| CliError::Input(format!("no tensor named {name:?}")))
}

fn replace(f: &mut TensorFile, name: &str, m: Matrix) {
    match f.tensors.iter_mut().find(|(n, _)| n == name) {
        Some(slot) => slot.1 = m,
        None => f.tensors.push((name.to_string(), m)),
    }
}

fn mean_vision_rms(m: &Matrix, vision: &[usize]) -> f64 {
    vision.iter().map(|&i| rms(m.row(i))).sum::<f64>() / vision.len().max(1) as f64
}

pub fn run(cmd: InterveneCommand) -> Result<(), CliError> {
    let (mut file, out) = match &cmd {
        InterveneCommand::Normalize { io, .. }
        | InterveneCommand::Compress { io, .. }
        | InterveneCommand::Multilayer { io, .. } => (read_tensors(&io.input)?, io.out.clone()),
    };
    match cmd {
        InterveneCommand::Normalize {
            tensor: name,
            target_rms,
            from_text,
            ..
        } => {
            let partition = file
                .partition
                .clone()
                .ok_or_else(|| CliError::Input("normalize needs a partition in the tensor file".into()))?;
            let emb = tensor(&file, &name)?;
            let cal = match (target_rms, from_text) {
                (Some(t), _) => NormCalibration::fixed(t)?,
                (None, true) => NormCalibration::measured_from_text(emb, &partition)?,
                (None, false) => NormCalibration::default(),
            };
            let vision = partition.indices(TokenGroup::Vision);
            let before = mean_vision_rms(emb, vision);
            let scaled = normalize_vision(emb, &partition, &cal)?;
            println!(
                "vision RMS {before:.4} -> {:.4} (target {})",
                mean_vision_rms(&scaled, vision),
                cal.target_rms()
            );
            replace(&mut file, &name, scaled);
        }
        InterveneCommand::Compress { tensor: name, target, .. } => {
            let m = tensor(&file, &name)?;
            let pooled = avg_pool_compress(m, target)?;
            println!("{name}: {} tokens -> {}", m.rows(), pooled.rows());
            replace(&mut file, &name, pooled);
            if file.partition.take().is_some() {
                println!("partition dropped: token count changed");
            }
        }
        InterveneCommand::Multilayer {
            layers,
            projector,
            name,
            ..
        } => {
            let feats = layers
                .iter()
                .map(|n| tensor(&file, n).cloned())
                .collect::<Result<Vec<_>, _>>()?;
            let ids: Vec<usize> = (0..feats.len()).collect();
            let out = multilayer_concat(&feats, &ids, tensor(&file, &projector)?)?;
            println!("{name}: {} tokens x {}", out.rows(), out.cols());
            replace(&mut file, &name, out);
        }
    }
    write_tensors(&file, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
