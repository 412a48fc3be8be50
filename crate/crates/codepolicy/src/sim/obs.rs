//! Observation construction: base occupancy grid, wrist crop, proprioception.

use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::types::{grid_cell, Color, Shape, GRID};

/// Channel layout of the occupancy grids. The first 14 channels describe
/// scene content; the rest project the end-effector into the camera view
/// (the base view sees the arm).
pub const CH_COLOR: usize = 0; // 8 channels
pub const CH_SHAPE: usize = 8; // 4 channels
pub const CH_UPRIGHT: usize = 12;
pub const CH_TARGET: usize = 13;
pub const CH_EE: usize = 14;
pub const CH_EE_Z: usize = 15;
pub const CH_EE_FX: usize = 16;
pub const CH_EE_FY: usize = 17;
pub const CH_GRIP: usize = 18;
pub const CH_HELD: usize = 19;
pub const CHANNELS: usize = 20;

pub const WRIST: usize = 3;
pub const PROPRIO_DIM: usize = 5;
pub const EXTRA_DIM: usize = 2 + Color::ALL.len() + Shape::ALL.len();

/// Everything a policy sees at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `[CHANNELS, GRID, GRID]`, row-major.
    pub base: Vec<f32>,
    /// `[CHANNELS, WRIST, WRIST]` crop centered at the EE cell; includes the
    /// held actor, which the base grid hides.
    pub wrist: Vec<f32>,
    /// EE x, y, z, gripper flag, holding flag.
    pub proprio: Vec<f32>,
    /// Gripper extra: flags plus held-actor color/shape one-hots.
    pub extra: Vec<f32>,
}

impl Observation {
    pub fn base_shape() -> [usize; 3] {
        [CHANNELS, GRID, GRID]
    }

    pub fn wrist_shape() -> [usize; 3] {
        [CHANNELS, WRIST, WRIST]
    }

    fn base_idx(c: usize, i: usize, j: usize) -> usize {
        (c * GRID + i) * GRID + j
    }

    pub fn base_at(&self, c: usize, i: usize, j: usize) -> f32 {
        self.base[Self::base_idx(c, i, j)]
    }

    /// Cells with the given color channel active.
    pub fn active_color_cells(&self, color: Color) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..GRID {
            for j in 0..GRID {
                if self.base_at(CH_COLOR + color.index(), i, j) > 0.5 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Grid cells where both the color and shape channels are active.
    pub fn descriptor_cells(&self, color: Color, shape: Shape) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..GRID {
            for j in 0..GRID {
                if self.base_at(CH_COLOR + color.index(), i, j) > 0.5
                    && self.base_at(CH_SHAPE + shape.index(), i, j) > 0.5
                {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn observe(scene: &Scene) -> Observation {
    let mut base = vec![0f32; CHANNELS * GRID * GRID];
    let set = |buf: &mut Vec<f32>, c: usize, i: usize, j: usize, v: f32| {
        buf[(c * GRID + i) * GRID + j] = v;
    };

    for actor in &scene.actors {
        if scene.ee.held_actor == Some(actor.id) {
            continue; // held actors render in the wrist view only
        }
        let (i, j) = grid_cell(actor.pose.x, actor.pose.y);
        set(&mut base, CH_COLOR + actor.color.index(), i, j, 1.0);
        set(&mut base, CH_SHAPE + actor.shape.index(), i, j, 1.0);
        if actor.pose.upright {
            set(&mut base, CH_UPRIGHT, i, j, 1.0);
        }
    }
    if let Some((gx, gy)) = scene.goal {
        let (i, j) = grid_cell(gx, gy);
        set(&mut base, CH_TARGET, i, j, 1.0);
    }

    let (ei, ej) = grid_cell(scene.ee.x, scene.ee.y);
    set(&mut base, CH_EE, ei, ej, 1.0);
    set(&mut base, CH_EE_Z, ei, ej, scene.ee.z / 0.5);
    set(&mut base, CH_EE_FX, ei, ej, (scene.ee.x * GRID as f32 - ei as f32).clamp(0.0, 1.0));
    set(&mut base, CH_EE_FY, ei, ej, (scene.ee.y * GRID as f32 - ej as f32).clamp(0.0, 1.0));
    if scene.ee.gripper_on {
        set(&mut base, CH_GRIP, ei, ej, 1.0);
    }
    if scene.ee.held_actor.is_some() {
        set(&mut base, CH_HELD, ei, ej, 1.0);
    }

    // Wrist crop: 3x3 neighborhood around the EE cell, zero outside the
    // table, plus the held actor at the center cell.
    let mut wrist = vec![0f32; CHANNELS * WRIST * WRIST];
    for wi in 0..WRIST {
        for wj in 0..WRIST {
            let gi = ei as isize + wi as isize - 1;
            let gj = ej as isize + wj as isize - 1;
            if gi < 0 || gj < 0 || gi >= GRID as isize || gj >= GRID as isize {
                continue;
            }
            for c in 0..CHANNELS {
                wrist[(c * WRIST + wi) * WRIST + wj] =
                    base[(c * GRID + gi as usize) * GRID + gj as usize];
            }
        }
    }
    if let Some(held) = scene.ee.held_actor {
        let actor = scene.actor(held);
        let center = |c: usize| (c * WRIST + 1) * WRIST + 1;
        wrist[center(CH_COLOR + actor.color.index())] = 1.0;
        wrist[center(CH_SHAPE + actor.shape.index())] = 1.0;
        if actor.pose.upright {
            wrist[center(CH_UPRIGHT)] = 1.0;
        }
    }

    let held = scene.ee.held_actor.is_some();
    let proprio = vec![
        scene.ee.x,
        scene.ee.y,
        scene.ee.z,
        scene.ee.gripper_on as u8 as f32,
        held as u8 as f32,
    ];

    let mut extra = vec![0f32; EXTRA_DIM];
    extra[0] = scene.ee.gripper_on as u8 as f32;
    extra[1] = held as u8 as f32;
    if let Some(id) = scene.ee.held_actor {
        let actor = scene.actor(id);
        extra[2 + actor.color.index()] = 1.0;
        extra[2 + Color::ALL.len() + actor.shape.index()] = 1.0;
    }

    Observation { base, wrist, proprio, extra }
}
