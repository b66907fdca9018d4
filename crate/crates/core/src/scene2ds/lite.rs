//! 2DS-lite: small grid-aligned scenes whose rendered patches serve directly
//! as vision-token features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::generate::draw_attributes;
use super::questions::generate_questions;
use super::render::{render, Image};
use super::types::{Question, Scene, SceneObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiteConfig {
    pub seed: u64,
    /// Cells per side; the scene has `grid * grid` patches.
    pub grid: usize,
    pub cell_px: usize,
    pub questions: usize,
    pub object_counts: Vec<usize>,
}

impl Default for LiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: 6,
            cell_px: 8,
            questions: 200,
            object_counts: vec![2, 3, 4],
        }
    }
}

impl LiteConfig {
    pub fn feature_dim(&self) -> usize {
        self.cell_px * self.cell_px * 3
    }

    pub fn tokens(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiteItem {
    pub scene: Scene,
    pub question: Question,
    /// One row per grid cell, row-major from the top-left.
    pub features: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiteDataset {
    pub config: LiteConfig,
    pub items: Vec<LiteItem>,
}

/// Splits an image into `cell_px` square patches, each flattened to RGB
/// values in `[0, 1]`.
pub fn patchify(img: &Image, cell_px: usize) -> Result<Matrix> {
    if cell_px == 0 || !img.width.is_multiple_of(cell_px) || !img.height.is_multiple_of(cell_px) {
        return Err(Error::dims(format!(
            "{}x{} image is not tiled by {cell_px}px patches",
            img.width, img.height
        )));
    }
    let (gx, gy) = (img.width / cell_px, img.height / cell_px);
    let mut out = Matrix::zeros(gx * gy, cell_px * cell_px * 3);
    for cy in 0..gy {
        for cx in 0..gx {
            let row = out.row_mut(cy * gx + cx);
            for py in 0..cell_px {
                for px in 0..cell_px {
                    let p = img.pixel(cx * cell_px + px, cy * cell_px + py);
                    for (ch, &v) in p.iter().enumerate() {
                        row[(py * cell_px + px) * 3 + ch] = v as f64 / 255.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A scene with objects centered in distinct rows and columns of the grid.
pub fn grid_scene<R: Rng + ?Sized>(id: u64, n: usize, grid: usize, rng: &mut R) -> Result<Scene> {
    if n < 2 || n > grid || n > 5 {
        return Err(Error::InvalidArgument(format!(
            "{n} objects do not fit a {grid}-cell grid with distinct shapes"
        )));
    }
    let mut cols: Vec<usize> = (0..grid).collect();
    let mut rows: Vec<usize> = (0..grid).collect();
    cols.shuffle(rng);
    rows.shuffle(rng);
    let g = grid as f64;
    let objects = draw_attributes(n, rng)
        .into_iter()
        .zip(cols.into_iter().zip(rows))
        .map(|((color, shape), (c, r))| SceneObject {
            shape,
            color,
            center: [(c as f64 + 0.5) / g, (r as f64 + 0.5) / g],
            size: 0.8 / g,
        })
        .collect();
    Ok(Scene { id, objects })
}

/// Grid cell `(row, col)` containing a point of the unit square.
pub fn cell_of(center: [f64; 2], grid: usize) -> (usize, usize) {
    let g = grid as f64;
    let clamp = |v: f64| ((v * g).floor() as usize).min(grid - 1);
    (clamp(center[1]), clamp(center[0]))
}

/// Builds `cfg.questions` items, six per scene, with the scene's patches as
/// features. Scenes that the question generator cannot use are redrawn.
pub fn generate_lite(cfg: &LiteConfig) -> Result<LiteDataset> {
    if cfg.object_counts.is_empty() || cfg.grid == 0 || cfg.cell_px == 0 {
        return Err(Error::InvalidConfig("empty 2DS-lite configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut items = Vec::with_capacity(cfg.questions);
    let mut scene_id = 0u64;
    let mut failures = 0usize;
    while items.len() < cfg.questions {
        let n = cfg.object_counts[(scene_id as usize) % cfg.object_counts.len()];
        let scene = grid_scene(scene_id, n, cfg.grid, &mut rng)?;
        let questions = match generate_questions(&scene, &mut rng) {
            Ok(q) => q,
            Err(Error::NonIdentifying(_) | Error::Degenerate(_)) if failures < 1000 => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let features = patchify(&render(&scene, cfg.grid * cfg.cell_px), cfg.cell_px)?;
        for question in questions.into_iter().take(cfg.questions - items.len()) {
            items.push(LiteItem {
                scene: scene.clone(),
                question,
                features: features.clone(),
            });
        }
        scene_id += 1;
    }
    Ok(LiteDataset {
        config: cfg.clone(),
        items,
    })
}
