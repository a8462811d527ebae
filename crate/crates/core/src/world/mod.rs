//! The closed synthetic world: scenes of colored shapes on a grid, their
//! rendered images, and the caption grammar that describes them.

pub mod corpus;
pub mod grammar;
pub mod render;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID: usize = 3;
pub const DEFAULT_CANVAS: usize = 32;
pub const MAX_OBJECTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

pub const SHAPES: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

impl Shape {
    pub fn word(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
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
    Magenta,
    Cyan,
}

pub const COLORS: [Color; 6] =
    [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Magenta, Color::Cyan];

impl Color {
    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Magenta => "magenta",
            Color::Cyan => "cyan",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Yellow => [1.0, 1.0, 0.0],
            Color::Magenta => [1.0, 0.0, 1.0],
            Color::Cyan => [0.0, 1.0, 1.0],
        }
    }
}

/// Spatial relation between scene objects 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::LeftOf => Relation::RightOf,
            Relation::RightOf => Relation::LeftOf,
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
        }
    }

    pub fn words(self) -> &'static [&'static str] {
        match self {
            Relation::LeftOf => &["left", "of"],
            Relation::RightOf => &["right", "of"],
            Relation::Above => &["above"],
            Relation::Below => &["below"],
        }
    }

    /// Does `a REL b` hold for the given grid cells?
    pub fn holds(self, a: (usize, usize), b: (usize, usize)) -> bool {
        match self {
            Relation::LeftOf => a.1 < b.1,
            Relation::RightOf => a.1 > b.1,
            Relation::Above => a.0 < b.0,
            Relation::Below => a.0 > b.0,
        }
    }
}

pub const RELATIONS: [Relation; 4] =
    [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub row: usize,
    pub col: usize,
}

impl SceneObject {
    pub fn cell(&self) -> (usize, usize) {
        (self.row, self.col)
    }
}

/// Symbolic description of a toy image: the semantic ground truth behind the
/// rendered pixels and every caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub relation: Option<Relation>,
    #[serde(default = "default_canvas")]
    pub canvas_size: usize,
}

fn default_canvas() -> usize {
    DEFAULT_CANVAS
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(Error::invalid(format!("scene has {} objects", self.objects.len())));
        }
        for o in &self.objects {
            if o.row >= GRID || o.col >= GRID {
                return Err(Error::invalid(format!("cell ({}, {}) outside grid", o.row, o.col)));
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if a.cell() == b.cell() {
                    return Err(Error::invalid(format!("two objects share cell {:?}", a.cell())));
                }
            }
        }
        if let Some(rel) = self.relation {
            if self.objects.len() < 2 {
                return Err(Error::invalid("relation requires at least two objects"));
            }
            if !rel.holds(self.objects[0].cell(), self.objects[1].cell()) {
                return Err(Error::invalid(format!(
                    "relation {rel:?} inconsistent with cells {:?} and {:?}",
                    self.objects[0].cell(),
                    self.objects[1].cell()
                )));
            }
        }
        if self.canvas_size < GRID * 4 {
            return Err(Error::invalid(format!("canvas {} too small", self.canvas_size)));
        }
        Ok(())
    }
}

/// Derives a stream seed so parallel corpus generation stays
/// schedule-independent (splitmix64 finalizer).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministically samples a valid scene: 1-3 objects on distinct cells,
/// with a spatial relation derived from the first two objects' cells.
pub fn sample_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arity = {
        let x: f64 = rng.gen();
        if x < 0.35 {
            1
        } else if x < 0.75 {
            2
        } else {
            3
        }
    };

    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(arity);
    while cells.len() < arity {
        let cell = (rng.gen_range(0..GRID), rng.gen_range(0..GRID));
        if !cells.contains(&cell) {
            cells.push(cell);
        }
    }

    let objects: Vec<SceneObject> = cells
        .into_iter()
        .map(|(row, col)| SceneObject {
            shape: SHAPES[rng.gen_range(0..SHAPES.len())],
            color: COLORS[rng.gen_range(0..COLORS.len())],
            row,
            col,
        })
        .collect();

    let relation = if arity >= 2 {
        let a = objects[0].cell();
        let b = objects[1].cell();
        let valid: Vec<Relation> = RELATIONS.iter().copied().filter(|r| r.holds(a, b)).collect();
        Some(valid[rng.gen_range(0..valid.len())])
    } else {
        None
    };

    let scene = Scene { objects, relation, canvas_size: DEFAULT_CANVAS };
    debug_assert!(scene.validate().is_ok());
    scene
}
