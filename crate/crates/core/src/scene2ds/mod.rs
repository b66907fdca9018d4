//! The 2DS synthetic spatial benchmark: colored shapes on a unit canvas and
//! questions whose answers depend only on where the shapes are.

mod eval;
mod generate;
pub mod lite;
mod oracle;
mod questions;
mod render;
mod types;

pub use eval::{
    canonicalize, evaluate_answers, extract_answer, parse_predictions, AccuracyReport, CategoryAccuracy,
};
pub use generate::{
    generate_dataset, generate_scene, meta_objects, place_objects, write_dataset, Dataset, DatasetCounts,
    DatasetManifest, GenConfig, MetaCounts, Twin,
};
pub use oracle::{
    answer_for_object, extremal_object, flipped_twin, mirror_query_horizontal, mirror_query_vertical,
    oracle_answer, oracle_query, relation_holds,
};
pub use questions::{generate_questions, render_text};
pub use render::{render, Image, BACKGROUND};
pub use types::{
    Category, Color, Direction, Query, Question, Referent, Relation, Scene, SceneObject, SemanticAxis, Shape,
    SpatialAxis,
};

/// Minimum coordinate separation, as a fraction of the canvas, between any
/// two objects on each axis.
pub const AMBIGUITY_BAND: f64 = 0.1;
pub const FORMAT_VERSION: u32 = 1;
pub const TEMPLATE_VERSION: &str = "2ds-templates-v1";
pub const COORDINATE_CONVENTION: &str = "origin top-left, x right, y down; bottom = largest y";
/// Object counts, one meta-category each.
pub const META_CATEGORIES: [usize; 5] = [2, 3, 4, 5, 6];
pub const SCENES_PER_META_CATEGORY: usize = 100;
