//! Core domain types for the tabletop world.

use serde::{Deserialize, Serialize};

/// Table-plane coordinates live in [0,1]^2; z is height above the table.
pub const TABLE_MIN: f32 = 0.0;
pub const TABLE_MAX: f32 = 1.0;
/// Per-step end-effector motion cap (per axis, after scaling).
pub const MAX_STEP: f32 = 0.05;
/// Grid resolution of the observation.
pub const GRID: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Cyan,
    Red,
    White,
    Yellow,
    Black,
    Blue,
    Green,
    Purple,
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Cyan,
        Color::Red,
        Color::White,
        Color::Yellow,
        Color::Black,
        Color::Blue,
        Color::Green,
        Color::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Cyan => "cyan",
            Color::Red => "red",
            Color::White => "white",
            Color::Yellow => "yellow",
            Color::Black => "black",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Purple => "purple",
        }
    }

    pub fn index(self) -> usize {
        Color::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Color {
        Color::ALL[i]
    }

    pub fn parse(s: &str) -> Option<Color> {
        Color::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Cube,
    Cylinder,
    Triangle,
    Hexagon,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Cube, Shape::Cylinder, Shape::Triangle, Shape::Hexagon];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Triangle => "triangle",
            Shape::Hexagon => "hexagon",
        }
    }

    pub fn index(self) -> usize {
        Shape::ALL.iter().position(|&s| s == self).unwrap()
    }

    pub fn from_index(i: usize) -> Shape {
        Shape::ALL[i]
    }

    pub fn parse(s: &str) -> Option<Shape> {
        Shape::ALL.iter().copied().find(|c| c.name() == s)
    }

    /// Half extent of the shape's footprint (also half its height).
    pub fn half_extent(self) -> f32 {
        match self {
            Shape::Cube => 0.040,
            Shape::Cylinder => 0.035,
            Shape::Triangle => 0.030,
            Shape::Hexagon => 0.045,
        }
    }
}

/// Cardinal placement directions on the table plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
    Front,
    Behind,
}

impl Direction {
    pub const ALL: [Direction; 4] =
        [Direction::Left, Direction::Right, Direction::Front, Direction::Behind];

    pub fn unit(self) -> (f32, f32) {
        match self {
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
            Direction::Front => (0.0, -1.0),
            Direction::Behind => (0.0, 1.0),
        }
    }

    /// The `direction=[dx, dy]` integers in rendered code.
    pub fn ints(self) -> (i8, i8) {
        let (x, y) = self.unit();
        (x as i8, y as i8)
    }

    pub fn from_ints(x: i8, y: i8) -> Option<Direction> {
        Direction::ALL.iter().copied().find(|d| d.ints() == (x, y))
    }

    /// Natural-language description used in rendered code and prompts.
    pub fn description(self) -> &'static str {
        match self {
            Direction::Left => "left of",
            Direction::Right => "right of",
            Direction::Front => "in front of",
            Direction::Behind => "behind",
        }
    }

    pub fn index(self) -> usize {
        Direction::ALL.iter().position(|&d| d == self).unwrap()
    }

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i]
    }
}

/// Position and attitude of an actor or a target on the table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f32,
    pub y: f32,
    /// Height of the object's bottom face above the table.
    pub z: f32,
    pub theta: f32,
    pub upright: bool,
}

impl Pose {
    pub fn at(x: f32, y: f32) -> Pose {
        Pose { x, y, z: 0.0, theta: 0.0, upright: true }
    }

    pub fn with_z(x: f32, y: f32, z: f32) -> Pose {
        Pose { x, y, z, theta: 0.0, upright: true }
    }

    /// Clamp x/y to the table and wrap theta into [-pi, pi).
    pub fn normalized(mut self) -> Pose {
        self.x = self.x.clamp(TABLE_MIN, TABLE_MAX);
        self.y = self.y.clamp(TABLE_MIN, TABLE_MAX);
        self.z = self.z.max(0.0);
        let two_pi = std::f32::consts::TAU;
        let mut t = (self.theta + std::f32::consts::PI) % two_pi;
        if t < 0.0 {
            t += two_pi;
        }
        self.theta = t - std::f32::consts::PI;
        self
    }

    pub fn xy_dist(&self, other: &Pose) -> f32 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u32,
    pub shape: Shape,
    pub color: Color,
    pub pose: Pose,
    pub half_extent: f32,
}

impl Actor {
    pub fn new(id: u32, color: Color, shape: Shape, pose: Pose) -> Actor {
        Actor { id, shape, color, pose, half_extent: shape.half_extent() }
    }

    pub fn height(&self) -> f32 {
        2.0 * self.half_extent
    }

    /// Height of the top face above the table.
    pub fn top_z(&self) -> f32 {
        self.pose.z + self.height()
    }

    /// The "<color> <shape>" text used by `get_actor`.
    pub fn description(&self) -> String {
        format!("{} {}", self.color.name(), self.shape.name())
    }
}

/// End-effector state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EEState {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub gripper_on: bool,
    pub held_actor: Option<u32>,
}

impl EEState {
    pub fn home() -> EEState {
        EEState { x: 0.55, y: 0.55, z: 0.30, gripper_on: false, held_actor: None }
    }
}

/// Map table coordinates to a grid cell, clamped to [0, GRID-1].
pub fn grid_cell(x: f32, y: f32) -> (usize, usize) {
    let i = ((x * GRID as f32).floor() as isize).clamp(0, GRID as isize - 1) as usize;
    let j = ((y * GRID as f32).floor() as isize).clamp(0, GRID as isize - 1) as usize;
    (i, j)
}

/// Center of a grid cell in table coordinates.
pub fn cell_center(i: usize, j: usize) -> (f32, f32) {
    ((i as f32 + 0.5) / GRID as f32, (j as f32 + 0.5) / GRID as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cell_corners_and_interior() {
        assert_eq!(grid_cell(0.0, 0.0), (0, 0));
        assert_eq!(grid_cell(1.0, 1.0), (9, 9));
        assert_eq!(grid_cell(0.55, 0.31), (5, 3));
    }

    #[test]
    fn cell_center_roundtrip() {
        for i in 0..GRID {
            for j in 0..GRID {
                let (x, y) = cell_center(i, j);
                assert_eq!(grid_cell(x, y), (i, j));
            }
        }
    }

    #[test]
    fn pose_normalization_clamps_and_wraps() {
        let p = Pose { x: -0.3, y: 1.7, z: -0.1, theta: 4.0, upright: true }.normalized();
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 1.0);
        assert_eq!(p.z, 0.0);
        assert!(p.theta >= -std::f32::consts::PI && p.theta < std::f32::consts::PI);
    }
}
