use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Diamond,
    Cross,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Diamond,
        Shape::Cross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Diamond => "diamond",
            Shape::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
    Cyan,
    Magenta,
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Orange,
        Color::Purple,
        Color::Cyan,
        Color::Magenta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Orange => "orange",
            Color::Purple => "purple",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [230, 25, 75],
            Color::Green => [60, 180, 75],
            Color::Blue => [0, 130, 200],
            Color::Yellow => [255, 225, 25],
            Color::Orange => [245, 130, 48],
            Color::Purple => [145, 30, 180],
            Color::Cyan => [70, 240, 240],
            Color::Magenta => [240, 50, 230],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One shape on the canvas. Coordinates are in the unit square with the
/// origin at the top-left and `y` growing downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub center: [f64; 2],
    pub size: f64,
}

impl SceneObject {
    pub fn x(&self) -> f64 {
        self.center[0]
    }

    pub fn y(&self) -> f64 {
        self.center[1]
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.color, self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u64,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Scene {
        self.map_centers(|[x, y]| [1.0 - x, y])
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Scene {
        self.map_centers(|[x, y]| [x, 1.0 - y])
    }

    fn map_centers(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Scene {
        Scene {
            id: self.id,
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    center: f(o.center),
                    ..*o
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticAxis {
    Color,
    Shape,
    ColorShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialAxis {
    Absolute,
    Relative,
}

/// One cell of the semantic x spatial question grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Category {
    pub semantic: SemanticAxis,
    pub spatial: SpatialAxis,
}

impl Category {
    /// Report order.
    pub const ALL: [Category; 6] = [
        Category::new(SemanticAxis::Color, SpatialAxis::Absolute),
        Category::new(SemanticAxis::Color, SpatialAxis::Relative),
        Category::new(SemanticAxis::Shape, SpatialAxis::Absolute),
        Category::new(SemanticAxis::Shape, SpatialAxis::Relative),
        Category::new(SemanticAxis::ColorShape, SpatialAxis::Absolute),
        Category::new(SemanticAxis::ColorShape, SpatialAxis::Relative),
    ];

    pub const fn new(semantic: SemanticAxis, spatial: SpatialAxis) -> Self {
        Self { semantic, spatial }
    }

    /// Row label used in accuracy reports.
    pub fn name(self) -> &'static str {
        use SemanticAxis::*;
        use SpatialAxis::*;
        match (self.semantic, self.spatial) {
            (Color, Absolute) => "Color_abs.",
            (Color, Relative) => "Color_rel.",
            (Shape, Absolute) => "Shape_abs.",
            (Shape, Relative) => "Shape_rel.",
            (ColorShape, Absolute) => "Shape_color_abs.",
            (ColorShape, Relative) => "Shape_color_rel.",
        }
    }

    /// Short identifier used in question ids, e.g. `color-shape-rel`.
    pub fn slug(self) -> String {
        let semantic = match self.semantic {
            SemanticAxis::Color => "color",
            SemanticAxis::Shape => "shape",
            SemanticAxis::ColorShape => "color-shape",
        };
        let spatial = match self.spatial {
            SpatialAxis::Absolute => "abs",
            SpatialAxis::Relative => "rel",
        };
        format!("{semantic}-{spatial}")
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("all categories listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Top,
    Bottom,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Top, Direction::Bottom, Direction::Left, Direction::Right];

    pub fn word(self) -> &'static str {
        match self {
            Direction::Top => "top",
            Direction::Bottom => "bottom",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn mirrored_horizontal(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            d => d,
        }
    }

    pub fn mirrored_vertical(self) -> Self {
        match self {
            Direction::Top => Direction::Bottom,
            Direction::Bottom => Direction::Top,
            d => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Relation::LeftOf | Relation::RightOf)
    }

    pub fn mirrored_horizontal(self) -> Self {
        match self {
            Relation::LeftOf => Relation::RightOf,
            Relation::RightOf => Relation::LeftOf,
            r => r,
        }
    }

    pub fn mirrored_vertical(self) -> Self {
        match self {
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
            r => r,
        }
    }
}

/// Attribute description that should pick out exactly one object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Referent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

impl Referent {
    pub fn for_object(o: &SceneObject, axis: SemanticAxis) -> Self {
        match axis {
            SemanticAxis::Color => Referent {
                color: Some(o.color),
                shape: None,
            },
            SemanticAxis::Shape => Referent {
                color: None,
                shape: Some(o.shape),
            },
            SemanticAxis::ColorShape => Referent {
                color: Some(o.color),
                shape: Some(o.shape),
            },
        }
    }

    pub fn matches(&self, o: &SceneObject) -> bool {
        self.color.is_none_or(|c| c == o.color) && self.shape.is_none_or(|s| s == o.shape)
    }

    /// Noun phrase without article, e.g. "red object", "circle", "red circle".
    pub fn phrase(&self) -> String {
        match (self.color, self.shape) {
            (Some(c), Some(s)) => format!("{c} {s}"),
            (Some(c), None) => format!("{c} object"),
            (None, Some(s)) => s.to_string(),
            (None, None) => "object".to_string(),
        }
    }
}

/// Structured form of a question; the text is rendered from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Query {
    /// Which attribute does the extremal object along `direction` have.
    Extremal { direction: Direction, ask: SemanticAxis },
    /// Does `relation(subject, object)` hold.
    Relative {
        subject: Referent,
        relation: Relation,
        object: Referent,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub scene_id: u64,
    /// Number of objects in the scene (2..=6).
    pub meta_category: usize,
    pub category: Category,
    pub query: Query,
    pub text: String,
    pub gold: String,
    /// Candidate answers, for multiple-choice style scoring.
    pub choices: Vec<String>,
}
