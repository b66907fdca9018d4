//! Geometric answer oracle and the metamorphic transforms checked against it.

use crate::error::{Error, Result};

use super::types::{Direction, Query, Question, Referent, Relation, Scene, SceneObject, SemanticAxis};
use super::AMBIGUITY_BAND;

fn resolve<'a>(scene: &'a Scene, r: &Referent) -> Result<(usize, &'a SceneObject)> {
    let mut hits = scene.objects.iter().enumerate().filter(|(_, o)| r.matches(o));
    match (hits.next(), hits.next()) {
        (Some(hit), None) => Ok(hit),
        (None, _) => Err(Error::NonIdentifying(format!("no object matches {:?}", r.phrase()))),
        (Some(_), Some(_)) => Err(Error::NonIdentifying(format!(
            "more than one object matches {:?}",
            r.phrase()
        ))),
    }
}

fn coordinate(o: &SceneObject, d: Direction) -> f64 {
    // larger is "more extreme" in direction d
    match d {
        Direction::Bottom => o.y(),
        Direction::Top => -o.y(),
        Direction::Right => o.x(),
        Direction::Left => -o.x(),
    }
}

/// The object furthest along `direction`, which must lead the runner-up by
/// at least the ambiguity band.
pub fn extremal_object(scene: &Scene, direction: Direction) -> Result<&SceneObject> {
    let mut sorted: Vec<&SceneObject> = scene.objects.iter().collect();
    sorted.sort_by(|a, b| coordinate(b, direction).total_cmp(&coordinate(a, direction)));
    let first = *sorted
        .first()
        .ok_or_else(|| Error::NonIdentifying("scene has no objects".into()))?;
    if let Some(second) = sorted.get(1) {
        if coordinate(first, direction) - coordinate(second, direction) < AMBIGUITY_BAND - 1e-12 {
            return Err(Error::NonIdentifying(format!(
                "no object is clearly at the {}",
                direction.word()
            )));
        }
    }
    Ok(first)
}

/// Whether `relation(a, b)` holds; the pair must be separated by the
/// ambiguity band along the relation's axis.
pub fn relation_holds(a: &SceneObject, relation: Relation, b: &SceneObject) -> Result<bool> {
    let (da, db) = if relation.is_horizontal() {
        (a.x(), b.x())
    } else {
        (a.y(), b.y())
    };
    if (da - db).abs() < AMBIGUITY_BAND - 1e-12 {
        return Err(Error::NonIdentifying(format!(
            "objects are closer than the ambiguity band along the {} axis",
            if relation.is_horizontal() { "x" } else { "y" }
        )));
    }
    Ok(match relation {
        Relation::LeftOf => da < db,
        Relation::RightOf => da > db,
        // y grows downwards
        Relation::Above => da < db,
        Relation::Below => da > db,
    })
}

pub fn answer_for_object(o: &SceneObject, ask: SemanticAxis) -> String {
    match ask {
        SemanticAxis::Color => o.color.name().to_string(),
        SemanticAxis::Shape => o.shape.name().to_string(),
        SemanticAxis::ColorShape => o.label(),
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

/// Answers a structured query from the scene geometry.
pub fn oracle_query(scene: &Scene, query: &Query) -> Result<String> {
    match *query {
        Query::Extremal { direction, ask } => Ok(answer_for_object(extremal_object(scene, direction)?, ask)),
        Query::Relative {
            subject,
            relation,
            object,
        } => {
            let (i, a) = resolve(scene, &subject)?;
            let (j, b) = resolve(scene, &object)?;
            if i == j {
                return Err(Error::Degenerate(format!(
                    "{:?} is compared with itself",
                    subject.phrase()
                )));
            }
            Ok(yes_no(relation_holds(a, relation, b)?))
        }
    }
}

pub fn oracle_answer(scene: &Scene, question: &Question) -> Result<String> {
    if question.scene_id != scene.id {
        return Err(Error::InvalidArgument(format!(
            "question {} belongs to scene {}, not {}",
            question.id, question.scene_id, scene.id
        )));
    }
    oracle_query(scene, &question.query)
}

/// The query that asks the same thing of a left-right mirrored scene.
pub fn mirror_query_horizontal(q: &Query) -> Query {
    match *q {
        Query::Extremal { direction, ask } => Query::Extremal {
            direction: direction.mirrored_horizontal(),
            ask,
        },
        Query::Relative {
            subject,
            relation,
            object,
        } => Query::Relative {
            subject,
            relation: relation.mirrored_horizontal(),
            object,
        },
    }
}

pub fn mirror_query_vertical(q: &Query) -> Query {
    match *q {
        Query::Extremal { direction, ask } => Query::Extremal {
            direction: direction.mirrored_vertical(),
            ask,
        },
        Query::Relative {
            subject,
            relation,
            object,
        } => Query::Relative {
            subject,
            relation: relation.mirrored_vertical(),
            object,
        },
    }
}

/// Swaps the centres of the two objects a relative question compares, which
/// flips its answer while keeping every other object and attribute in place.
pub fn flipped_twin(scene: &Scene, query: &Query) -> Result<Scene> {
    let Query::Relative { subject, object, .. } = query else {
        return Err(Error::InvalidArgument("only relative questions have a flipped twin".into()));
    };
    let (i, _) = resolve(scene, subject)?;
    let (j, _) = resolve(scene, object)?;
    if i == j {
        return Err(Error::Degenerate("subject and object coincide".into()));
    }
    let mut twin = scene.clone();
    let (ci, cj) = (twin.objects[i].center, twin.objects[j].center);
    twin.objects[i].center = cj;
    twin.objects[j].center = ci;
    Ok(twin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene2ds::types::{Color, Shape};

    fn obj(color: Color, shape: Shape, x: f64, y: f64) -> SceneObject {
        SceneObject {
            shape,
            color,
            center: [x, y],
            size: 0.08,
        }
    }

    fn two() -> Scene {
        Scene {
            id: 1,
            objects: vec![
                obj(Color::Red, Shape::Circle, 0.2, 0.5),
                obj(Color::Blue, Shape::Square, 0.8, 0.3),
            ],
        }
    }

    fn rel(a: Referent, relation: Relation, b: Referent) -> Query {
        Query::Relative {
            subject: a,
            relation,
            object: b,
        }
    }

    fn by_color(c: Color) -> Referent {
        Referent {
            color: Some(c),
            shape: None,
        }
    }

    #[test]
    fn left_of() {
        let s = two();
        let q = rel(by_color(Color::Red), Relation::LeftOf, by_color(Color::Blue));
        assert_eq!(oracle_query(&s, &q).unwrap(), "yes");
        let q = rel(by_color(Color::Red), Relation::Above, by_color(Color::Blue));
        assert_eq!(oracle_query(&s, &q).unwrap(), "no");
    }

    #[test]
    fn self_comparison_is_degenerate() {
        let q = rel(by_color(Color::Red), Relation::LeftOf, by_color(Color::Red));
        assert!(matches!(oracle_query(&two(), &q), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ambiguous_and_missing_referents() {
        let mut s = two();
        s.objects.push(obj(Color::Red, Shape::Triangle, 0.5, 0.9));
        let q = rel(by_color(Color::Red), Relation::LeftOf, by_color(Color::Blue));
        let err = oracle_query(&s, &q).unwrap_err();
        assert!(err.to_string().starts_with("non-identifying query"));
        let q = rel(by_color(Color::Green), Relation::LeftOf, by_color(Color::Blue));
        assert!(oracle_query(&s, &q).is_err());
    }

    #[test]
    fn extremal_answers() {
        let s = two();
        let bottom = Query::Extremal {
            direction: Direction::Bottom,
            ask: SemanticAxis::Color,
        };
        assert_eq!(oracle_query(&s, &bottom).unwrap(), "red");
        let top = Query::Extremal {
            direction: Direction::Top,
            ask: SemanticAxis::ColorShape,
        };
        assert_eq!(oracle_query(&s, &top).unwrap(), "blue square");
        let mut close = two();
        close.objects[1].center[1] = 0.45;
        assert!(oracle_query(&close, &bottom).is_err());
    }

    #[test]
    fn twin_flips_relation() {
        let s = two();
        let q = rel(by_color(Color::Red), Relation::LeftOf, by_color(Color::Blue));
        let twin = flipped_twin(&s, &q).unwrap();
        assert_eq!(oracle_query(&twin, &q).unwrap(), "no");
    }

    #[test]
    fn mirrored_scene_and_query_agree() {
        let s = two();
        let queries = [
            rel(by_color(Color::Red), Relation::LeftOf, by_color(Color::Blue)),
            rel(by_color(Color::Red), Relation::Below, by_color(Color::Blue)),
            Query::Extremal {
                direction: Direction::Right,
                ask: SemanticAxis::Shape,
            },
        ];
        for q in queries {
            let want = oracle_query(&s, &q).unwrap();
            assert_eq!(oracle_query(&s.flip_horizontal(), &mirror_query_horizontal(&q)).unwrap(), want);
            assert_eq!(oracle_query(&s.flip_vertical(), &mirror_query_vertical(&q)).unwrap(), want);
        }
    }
}
