use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::oracle::{flipped_twin, oracle_query};
use super::questions::generate_questions;
use super::render::render;
use super::types::{Color, Query, Question, Scene, SceneObject, Shape};
use super::{
    AMBIGUITY_BAND, COORDINATE_CONVENTION, FORMAT_VERSION, META_CATEGORIES, SCENES_PER_META_CATEGORY,
    TEMPLATE_VERSION,
};

/// Closest any center may come to the canvas edge.
const EDGE_MARGIN: f64 = 0.06;
const MIN_SIZE: f64 = 0.07;
const MAX_SIZE: f64 = 0.1;
const MAX_OBJECTS: usize = 6;
// stream ids above this are reserved for attribute draws
const ATTRIBUTE_STREAM: u64 = 1 << 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub object_counts: Vec<usize>,
    pub scenes_per_category: usize,
    pub max_retries: usize,
    /// Also emit a position-swapped twin for every relative question.
    pub twins: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            object_counts: META_CATEGORIES.to_vec(),
            scenes_per_category: SCENES_PER_META_CATEGORY,
            max_retries: 64,
            twins: false,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaCounts {
    pub objects: usize,
    pub scenes: usize,
    pub questions: usize,
    /// The fixed (color, shape) set shared by every scene of this category.
    pub attributes: Vec<(Color, Shape)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub scenes: usize,
    pub questions: usize,
    pub per_meta_category: Vec<MetaCounts>,
    pub per_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub template_version: String,
    pub seed: u64,
    pub coordinate_convention: String,
    pub ambiguity_band: f64,
    pub counts: DatasetCounts,
    pub scenes: Vec<Scene>,
}

impl DatasetManifest {
    pub fn scene(&self, id: u64) -> Option<&Scene> {
        // ids are dense and ordered
        self.scenes.get(id as usize).filter(|s| s.id == id)
    }
}

/// A repositioning of a relative question's scene that flips its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Twin {
    pub question_id: String,
    pub scene: Scene,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub questions: Vec<Question>,
    pub twins: Vec<Twin>,
}

fn check_count(n: usize) -> Result<()> {
    if !(2..=MAX_OBJECTS).contains(&n) {
        return Err(Error::InvalidArgument(format!("object count {n} outside 2..={MAX_OBJECTS}")));
    }
    Ok(())
}

/// Distinct colors; distinct shapes while the palette allows, one repeat at 6.
pub(crate) fn draw_attributes<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(Color, Shape)> {
    let mut colors = Color::ALL.to_vec();
    colors.shuffle(rng);
    let mut shapes = Shape::ALL.to_vec();
    shapes.shuffle(rng);
    while shapes.len() < n {
        let s = shapes[rng.random_range(0..Shape::ALL.len())];
        shapes.push(s);
    }
    colors.into_iter().zip(shapes).take(n).collect()
}

/// The object set of the `n`-object meta-category under `seed`.
pub fn meta_objects(seed: u64, n: usize) -> Result<Vec<(Color, Shape)>> {
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ATTRIBUTE_STREAM + n as u64);
    Ok(draw_attributes(n, &mut rng))
}

/// `n` coordinates in `[EDGE_MARGIN, 1 - EDGE_MARGIN]` with every pair at
/// least `gap` apart, uniformly over all such configurations: sorted uniform
/// draws on the interval shortened by `(n - 1) gap`, re-expanded.
fn spread<R: Rng + ?Sized>(n: usize, gap: f64, rng: &mut R) -> Vec<f64> {
    let slack = (1.0 - 2.0 * EDGE_MARGIN) - (n.saturating_sub(1)) as f64 * gap;
    debug_assert!(slack >= 0.0);
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=slack)).collect();
    u.sort_by(f64::total_cmp);
    let mut v: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(i, x)| EDGE_MARGIN + x + i as f64 * gap)
        .collect();
    v.shuffle(rng);
    v
}

/// Random positions and sizes for a fixed attribute list. Every pair of
/// objects is separated by the ambiguity band on both axes.
pub fn place_objects<R: Rng + ?Sized>(attributes: &[(Color, Shape)], rng: &mut R) -> Vec<SceneObject> {
    let n = attributes.len();
    // a hair over the band so float rounding never lands below it
    let gap = AMBIGUITY_BAND + 1e-9;
    let xs = spread(n, gap, rng);
    let ys = spread(n, gap, rng);
    attributes
        .iter()
        .zip(xs.into_iter().zip(ys))
        .map(|(&(color, shape), (x, y))| SceneObject {
            shape,
            color,
            center: [x, y],
            size: rng.random_range(MIN_SIZE..MAX_SIZE),
        })
        .collect()
}

/// A fresh scene of `n` objects with randomly drawn attributes.
pub fn generate_scene<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<SceneObject>> {
    check_count(n)?;
    let attrs = draw_attributes(n, rng);
    Ok(place_objects(&attrs, rng))
}

fn scene_rng(seed: u64, scene_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_id);
    rng
}

fn build_scene(
    cfg: &GenConfig,
    attrs: &[(Color, Shape)],
    scene_id: u64,
) -> Result<(Scene, Vec<Question>, Vec<Twin>)> {
    let mut rng = scene_rng(cfg.seed, scene_id);
    for _ in 0..cfg.max_retries {
        let scene = Scene {
            id: scene_id,
            objects: place_objects(attrs, &mut rng),
        };
        let questions = match generate_questions(&scene, &mut rng) {
            Ok(q) => q,
            Err(Error::NonIdentifying(_) | Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        let twins = if cfg.twins {
            questions
                .iter()
                .filter(|q| matches!(q.query, Query::Relative { .. }))
                .map(|q| make_twin(&scene, q))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        return Ok((scene, questions, twins));
    }
    Err(Error::GenerationExhausted {
        seed: cfg.seed,
        scene_id,
        retries: cfg.max_retries,
    })
}

fn make_twin(scene: &Scene, q: &Question) -> Result<Twin> {
    let twin = flipped_twin(scene, &q.query)?;
    let gold = oracle_query(&twin, &q.query)?;
    if gold == q.gold {
        return Err(Error::Degenerate(format!("twin of {} keeps its answer", q.id)));
    }
    Ok(Twin {
        question_id: q.id.clone(),
        scene: twin,
        gold,
    })
}

/// Builds the whole corpus. Scenes are generated in parallel, each from its
/// own stream of the seeded generator, so the result does not depend on
/// scheduling.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    if cfg.object_counts.is_empty() || cfg.scenes_per_category == 0 {
        return Err(Error::InvalidConfig("dataset would be empty".into()));
    }
    let attrs: Vec<Vec<(Color, Shape)>> = cfg
        .object_counts
        .iter()
        .map(|&n| meta_objects(cfg.seed, n))
        .collect::<Result<_>>()?;
    let per = cfg.scenes_per_category;
    let built: Vec<(Scene, Vec<Question>, Vec<Twin>)> = (0..attrs.len() * per)
        .into_par_iter()
        .map(|i| build_scene(cfg, &attrs[i / per], i as u64))
        .collect::<Result<_>>()?;

    let mut scenes = Vec::with_capacity(built.len());
    let mut questions = Vec::with_capacity(built.len() * 6);
    let mut twins = Vec::new();
    for (s, q, t) in built {
        scenes.push(s);
        questions.extend(q);
        twins.extend(t);
    }
    let per_meta_category = cfg
        .object_counts
        .iter()
        .zip(attrs)
        .map(|(&n, attributes)| MetaCounts {
            objects: n,
            scenes: per,
            questions: questions.iter().filter(|q| q.meta_category == n).count(),
            attributes,
        })
        .collect();
    let mut per_category = BTreeMap::new();
    for q in &questions {
        *per_category.entry(q.category.name().to_string()).or_insert(0) += 1;
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        template_version: TEMPLATE_VERSION.to_string(),
        seed: cfg.seed,
        coordinate_convention: COORDINATE_CONVENTION.to_string(),
        ambiguity_band: AMBIGUITY_BAND,
        counts: DatasetCounts {
            scenes: scenes.len(),
            questions: questions.len(),
            per_meta_category,
            per_category,
        },
        scenes,
    };
    Ok(Dataset {
        manifest,
        questions,
        twins,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Writes `manifest.json`, `questions.jsonl`, `twins.jsonl` (validation mode
/// only) and, when `resolution` is given, one PPM per scene under `images/`.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>, resolution: Option<usize>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let manifest = dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&ds.manifest)?;
    bytes.push(b'\n');
    std::fs::write(&manifest, bytes)?;
    written.push(manifest);

    let questions = dir.join("questions.jsonl");
    write_jsonl(&questions, &ds.questions)?;
    written.push(questions);

    if !ds.twins.is_empty() {
        let twins = dir.join("twins.jsonl");
        write_jsonl(&twins, &ds.twins)?;
        written.push(twins);
    }

    if let Some(res) = resolution {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        let paths: Vec<PathBuf> = ds
            .manifest
            .scenes
            .par_iter()
            .map(|s| {
                let p = images.join(format!("scene_{:04}.ppm", s.id));
                render(s, res).write_ppm(&p).map(|_| p)
            })
            .collect::<Result<_>>()?;
        written.extend(paths);
    }
    Ok(written)
}
