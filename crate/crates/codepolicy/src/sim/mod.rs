//! Deterministic, seeded 2.5D tabletop world.

pub mod obs;
pub mod scene;
pub mod task;
pub mod types;

pub use obs::{observe, Observation, CHANNELS, EXTRA_DIM, PROPRIO_DIM, WRIST};
pub use scene::{Scene, SceneError};
pub use task::{TaskKind, TaskSpec};
pub use types::{
    cell_center, grid_cell, Actor, Color, Direction, EEState, Pose, Shape, GRID, MAX_STEP,
    TABLE_MAX, TABLE_MIN,
};
