use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::oracle::{answer_for_object, oracle_query, relation_holds};
use super::types::{Category, Direction, Query, Question, Referent, Relation, Scene, SceneObject, SpatialAxis};

/// Question wording for a structured query.
pub fn render_text(query: &Query) -> String {
    match query {
        Query::Extremal { direction, ask } => {
            let lead = match ask {
                super::SemanticAxis::Color => "What color is",
                super::SemanticAxis::Shape => "What shape is",
                super::SemanticAxis::ColorShape => "Which object is",
            };
            format!("{lead} at the {} of the image?", direction.word())
        }
        Query::Relative {
            subject,
            relation,
            object,
        } => format!(
            "Is the {} {} the {}?",
            subject.phrase(),
            relation.phrase(),
            object.phrase()
        ),
    }
}

/// Objects that the axis-restricted referent picks out uniquely.
fn identifiable(scene: &Scene, category: Category) -> Vec<&SceneObject> {
    scene
        .objects
        .iter()
        .filter(|o| {
            let r = Referent::for_object(o, category.semantic);
            scene.objects.iter().filter(|p| r.matches(p)).count() == 1
        })
        .collect()
}

fn relative_query<R: Rng + ?Sized>(scene: &Scene, category: Category, rng: &mut R) -> Result<Query> {
    let mut pool = identifiable(scene, category);
    if pool.len() < 2 {
        return Err(Error::NonIdentifying(format!(
            "fewer than two objects identifiable by {:?}",
            category.semantic
        )));
    }
    pool.shuffle(rng);
    let (a, b) = (pool[0], pool[1]);
    let want_yes = rng.random_bool(0.5);
    let (pos, neg) = if rng.random_bool(0.5) {
        (Relation::LeftOf, Relation::RightOf)
    } else {
        (Relation::Above, Relation::Below)
    };
    let relation = if relation_holds(a, pos, b)? == want_yes { pos } else { neg };
    Ok(Query::Relative {
        subject: Referent::for_object(a, category.semantic),
        relation,
        object: Referent::for_object(b, category.semantic),
    })
}

fn choices(scene: &Scene, query: &Query) -> Vec<String> {
    match query {
        Query::Extremal { ask, .. } => {
            let mut c: Vec<String> = scene.objects.iter().map(|o| answer_for_object(o, *ask)).collect();
            c.sort();
            c.dedup();
            c
        }
        Query::Relative { .. } => vec!["yes".into(), "no".into()],
    }
}

/// One question per category cell, in report order.
///
/// Fails when a cell has no unambiguous instantiation; the generator then
/// redraws the scene.
pub fn generate_questions<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<Vec<Question>> {
    Category::ALL
        .iter()
        .map(|&category| {
            let query = match category.spatial {
                SpatialAxis::Absolute => Query::Extremal {
                    direction: Direction::ALL[rng.random_range(0..Direction::ALL.len())],
                    ask: category.semantic,
                },
                SpatialAxis::Relative => relative_query(scene, category, rng)?,
            };
            let gold = oracle_query(scene, &query)?;
            Ok(Question {
                id: format!("{:04}-{}", scene.id, category.slug()),
                scene_id: scene.id,
                meta_category: scene.objects.len(),
                category,
                text: render_text(&query),
                choices: choices(scene, &query),
                query,
                gold,
            })
        })
        .collect()
}
