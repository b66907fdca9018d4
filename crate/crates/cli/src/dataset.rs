use std::path::PathBuf;

use clap::Args;
use spatialprobe::scene2ds::{
    evaluate_answers, generate_dataset, parse_predictions, render, write_dataset, DatasetManifest, GenConfig,
    Question, META_CATEGORIES, SCENES_PER_META_CATEGORY,
};

use crate::error::{read_string, CliError};
use crate::output::ReportArgs;

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Object counts to generate, one meta-category each (2 to 6).
    #[arg(long, value_delimiter = ',', default_values_t = META_CATEGORIES)]
    objects: Vec<usize>,
    #[arg(long, default_value_t = SCENES_PER_META_CATEGORY)]
    scenes_per_category: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// Write PNG images instead of PPM.
    #[arg(long)]
    png: bool,
    /// Also write a position-swapped twin for every relative question.
    #[arg(long)]
    twins: bool,
}

pub fn gen2ds(a: GenArgs) -> Result<(), CliError> {
    if a.resolution == 0 {
        return Err(CliError::Usage("--resolution must be positive".into()));
    }
    let cfg = GenConfig {
        seed: a.seed,
        object_counts: a.objects,
        scenes_per_category: a.scenes_per_category,
        twins: a.twins,
        ..GenConfig::default()
    };
    let ds = generate_dataset(&cfg)?;
    let written = write_dataset(&ds, &a.out, (!a.png).then_some(a.resolution))?;
    let mut images = written.iter().filter(|p| p.extension().is_some_and(|e| e == "ppm")).count();
    if a.png {
        let dir = a.out.join("images");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for s in &ds.manifest.scenes {
            let img = render(s, a.resolution);
            let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels)
                .ok_or_else(|| CliError::Input("rendered image has the wrong size".into()))?;
            buf.save(dir.join(format!("scene_{:04}.png", s.id)))?;
            images += 1;
        }
    }
    for p in written.iter().filter(|p| p.extension().is_some_and(|e| e != "ppm")) {
        println!("wrote {}", p.display());
    }
    println!(
        "{} scenes, {} questions, {} twins, {images} images under {}",
        ds.manifest.counts.scenes,
        ds.manifest.counts.questions,
        ds.twins.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predictions as JSON lines `{"id", "answer"}` or one `{id: answer}` object.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to questions.jsonl next to the manifest.
    #[arg(long)]
    questions: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

pub fn eval2ds(a: EvalArgs) -> Result<(), CliError> {
    let manifest: DatasetManifest = serde_json::from_str(&read_string(&a.manifest)?)?;
    let qpath = a
        .questions
        .unwrap_or_else(|| a.manifest.with_file_name("questions.jsonl"));
    let questions = read_string(&qpath)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<Question>, _>>()?;
    if questions.len() != manifest.counts.questions {
        return Err(CliError::Input(format!(
            "{} lists {} questions but the manifest declares {}",
            qpath.display(),
            questions.len(),
            manifest.counts.questions
        )));
    }
    let preds = parse_predictions(&read_string(&a.pred)?)?;
    let report = evaluate_answers(&preds, &questions);
    for row in report.table() {
        let acc = row.accuracy.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!("{:<18} {:>7} ({}/{})", row.category, acc, row.correct, row.total);
    }
    if report.missing > 0 {
        println!("{} questions had no prediction", report.missing);
    }
    a.report.emit(&report)
}
