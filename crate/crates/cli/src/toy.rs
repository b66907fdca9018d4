use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use spatialprobe::probes::norm_profile;
use spatialprobe::scene2ds::lite::{generate_lite, LiteConfig};
use spatialprobe::toy::{Tokenizer, ToyConfig, ToyModel};
use spatialprobe::trace_io::{read_tensors, write_tensors, write_trace, Dtype, TensorFile, TraceFile};
use spatialprobe::{Matrix, TokenGroup, TokenPartition};

use crate::error::{read_string, CliError};

#[derive(Subcommand)]
pub enum ToyCommand {
    /// One forward pass, captured to a trace file.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Steps {
    /// The final position only.
    Last,
    /// Every text position.
    Text,
    /// Every position.
    All,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML file with model settings; unspecified fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight seed; also picks the 2DS-lite scene used as input.
    #[arg(long)]
    seed: u64,
    /// Overrides vision_norm_skew from the config.
    #[arg(long)]
    skew: Option<f64>,
    /// Tensor file holding an `embeddings` matrix and its partition, used
    /// instead of a generated scene.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Question text; defaults to the generated scene's question.
    #[arg(long)]
    question: Option<String>,
    #[arg(long, value_enum, default_value_t = Steps::Last)]
    steps: Steps,
    #[arg(long)]
    out: PathBuf,
    /// Also write the input embeddings and partition as a tensor file.
    #[arg(long)]
    dump_input: Option<PathBuf>,
    /// Store the trace payload as f32.
    #[arg(long)]
    f32: bool,
    /// Leave residual-stream states out of the trace.
    #[arg(long)]
    no_hidden: bool,
}

fn lite_for(cfg: &ToyConfig) -> Result<LiteConfig, CliError> {
    let grid = (cfg.n_vision as f64).sqrt().round() as usize;
    let cell = ((cfg.vision_feature_dim / 3) as f64).sqrt().round() as usize;
    if grid * grid != cfg.n_vision || 3 * cell * cell != cfg.vision_feature_dim || grid < 2 {
        return Err(CliError::Input(format!(
            "n_vision {} and vision_feature_dim {} do not describe a square grid of RGB patches; pass --input",
            cfg.n_vision, cfg.vision_feature_dim
        )));
    }
    Ok(LiteConfig {
        seed: cfg.seed,
        grid,
        cell_px: cell,
        questions: 1,
        object_counts: vec![grid.min(3)],
    })
}

fn load_input(path: &PathBuf) -> Result<(Matrix, TokenPartition), CliError> {
    let f = read_tensors(path)?;
    let emb = f
        .get("embeddings")
        .cloned()
        .ok_or_else(|| CliError::Input(format!("{} has no `embeddings` tensor", path.display())))?;
    let partition = f
        .partition
        .ok_or_else(|| CliError::Input(format!("{} has no partition", path.display())))?;
    Ok((emb, partition))
}

pub fn run(cmd: ToyCommand) -> Result<(), CliError> {
    let ToyCommand::Run(a) = cmd;
    let mut cfg: ToyConfig = match &a.config {
        Some(p) => toml::from_str(&read_string(p)?)?,
        None => ToyConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(s) = a.skew {
        cfg.vision_norm_skew = s;
    }
    let model = ToyModel::build(&cfg)?;
    let (emb, partition) = match &a.input {
        Some(p) => load_input(p)?,
        None => {
            let lite = generate_lite(&lite_for(&cfg)?)?;
            let item = &lite.items[0];
            let text = a.question.as_deref().unwrap_or(&item.question.text);
            println!("input: scene {} with {:?}", item.scene.id, text);
            model.embed(&item.features, &Tokenizer::default().encode_padded(text, cfg.n_text))?
        }
    };
    let rec = model.forward(&emb, &partition)?;
    let n = partition.seq_len();
    let steps: Vec<usize> = match a.steps {
        Steps::Last => vec![n - 1],
        Steps::Text => partition.indices(TokenGroup::Text).to_vec(),
        Steps::All => (0..n).collect(),
    };
    let mut file = TraceFile::from_record("toy", &rec, &steps, &partition, model.rope(), !a.no_hidden)?;
    if a.f32 {
        file.dtype = Dtype::F32;
    }
    write_trace(&file, &a.out)?;
    println!(
        "wrote {} ({} layers x {} heads, {} positions, {} query steps)",
        a.out.display(),
        cfg.layers,
        cfg.heads,
        n,
        steps.len()
    );
    if let Some(ratio) = norm_profile(&rec.hidden[..1], &partition)?.layers[0].ratio {
        println!("input vision/text norm ratio {ratio:.3}");
    }
    if let Some(p) = &a.dump_input {
        let t = TensorFile {
            dtype: Dtype::F64,
            tensors: vec![("embeddings".into(), emb)],
            partition: Some(partition),
        };
        write_tensors(&t, p)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}
