//! Utility pose functions over the current scene.

use thiserror::Error;

use crate::sim::scene::Scene;
use crate::sim::types::{cell_center, Actor, Direction, Pose, GRID};

/// Hover height of pre-pick/pre-place poses above the relevant top face.
pub const HOVER: f32 = 0.15;
/// Horizontal standoff of a pre-push pose from the pushed actor's center:
/// one grid cell, so approach poses land on the neighboring cell center.
pub const PUSH_STANDOFF: f32 = 0.1;
/// Contact height fractions (of actor height) for pushing and toppling.
pub const PUSH_HEIGHT_FRACTION: f32 = 0.3;
pub const TOPPLE_HEIGHT_FRACTION: f32 = 0.85;
pub use crate::sim::scene::NEXT_TO_FACTOR;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("no free cell available")]
    NoFreeSpace,
    #[error("no free pose along the {0:?} ray")]
    NoFreePoseAlongRay(Direction),
}

fn occupied_by_other(scene: &Scene, x: f32, y: f32, half_extent: f32, exclude: u32) -> bool {
    scene.actors.iter().any(|a| {
        a.id != exclude && {
            let d = ((a.pose.x - x).powi(2) + (a.pose.y - y).powi(2)).sqrt();
            d <= a.half_extent + half_extent
        }
    })
}

/// Nearest unoccupied interior cell center to the actor's current position
/// (deterministic scan order: distance, then cell index).
pub fn free_space(scene: &Scene, actor: &Actor) -> Result<Pose, PoseError> {
    let mut candidates: Vec<(usize, usize)> = Vec::with_capacity(GRID * GRID);
    for i in 1..GRID - 1 {
        for j in 1..GRID - 1 {
            candidates.push((i, j));
        }
    }
    candidates.sort_by(|&(ai, aj), &(bi, bj)| {
        let da = {
            let (x, y) = cell_center(ai, aj);
            (x - actor.pose.x).powi(2) + (y - actor.pose.y).powi(2)
        };
        let db = {
            let (x, y) = cell_center(bi, bj);
            (x - actor.pose.x).powi(2) + (y - actor.pose.y).powi(2)
        };
        da.partial_cmp(&db).unwrap().then((ai, aj).cmp(&(bi, bj)))
    });
    for (i, j) in candidates {
        let (x, y) = cell_center(i, j);
        // skip the goal zone so pushed-to targets stay reachable
        if let Some((gx, gy)) = scene.goal {
            if ((gx - x).powi(2) + (gy - y).powi(2)).sqrt() < 0.1 {
                continue;
            }
        }
        if !occupied_by_other(scene, x, y, actor.half_extent, actor.id)
            && ((x - actor.pose.x).powi(2) + (y - actor.pose.y).powi(2)).sqrt() > 0.05
        {
            return Ok(Pose::at(x, y));
        }
    }
    Err(PoseError::NoFreeSpace)
}

/// A pose for `actor` next to `next_to`, at 2.5x summed half extents along
/// `direction`, stepping further along the ray while the slot is occupied.
/// The description text never affects the result.
pub fn free_space_next_to(
    scene: &Scene,
    actor: &Actor,
    next_to: &Actor,
    direction: Direction,
    _description: &str,
) -> Result<Pose, PoseError> {
    let (dx, dy) = direction.unit();
    let base = NEXT_TO_FACTOR * (actor.half_extent + next_to.half_extent);
    let mut off = base;
    while off <= base + 0.9 {
        let x = next_to.pose.x + off * dx;
        let y = next_to.pose.y + off * dy;
        if (0.05..=0.95).contains(&x)
            && (0.05..=0.95).contains(&y)
            && !occupied_by_other(scene, x, y, actor.half_extent, actor.id)
        {
            return Ok(Pose::at(x, y));
        }
        off += 0.1;
    }
    Err(PoseError::NoFreePoseAlongRay(direction))
}

/// EE pose above the actor for a picking approach.
pub fn pre_pick_ee_pose(actor: &Actor) -> Pose {
    Pose::with_z(actor.pose.x, actor.pose.y, actor.top_z() + HOVER)
}

/// EE pose above `target_pose` while holding `actor`: the held actor's
/// bottom hovers `HOVER` above the target height.
pub fn pre_place_ee_pose(actor: &Actor, target_pose: &Pose) -> Pose {
    Pose::with_z(target_pose.x, target_pose.y, target_pose.z + actor.height() + HOVER)
}

/// EE pose behind the actor, opposite the push direction. For toppling the
/// contact height sits in the actor's top band; for pushing, low.
pub fn pre_push_pose(actor: &Actor, topple: bool, target_pose: Option<&Pose>) -> Pose {
    let (dx, dy) = push_direction(actor, target_pose);
    let frac = if topple { TOPPLE_HEIGHT_FRACTION } else { PUSH_HEIGHT_FRACTION };
    Pose::with_z(
        actor.pose.x - PUSH_STANDOFF * dx,
        actor.pose.y - PUSH_STANDOFF * dy,
        actor.pose.z + frac * actor.height(),
    )
    .normalized()
}

/// Cardinal push direction: toward the target's dominant axis, or toward
/// the table center when no target is given (toppling).
pub fn push_direction(actor: &Actor, target_pose: Option<&Pose>) -> (f32, f32) {
    let (vx, vy) = match target_pose {
        Some(t) => (t.x - actor.pose.x, t.y - actor.pose.y),
        None => (0.5 - actor.pose.x, 0.5 - actor.pose.y),
    };
    if vx.abs() >= vy.abs() {
        (if vx >= 0.0 { 1.0 } else { -1.0 }, 0.0)
    } else {
        (0.0, if vy >= 0.0 { 1.0 } else { -1.0 })
    }
}

/// A pose placing `actor` on top of `target_actor` (current pose).
pub fn pose_on_top(_actor: &Actor, target_actor: &Actor) -> Pose {
    Pose::with_z(target_actor.pose.x, target_actor.pose.y, target_actor.top_z())
}

/// Blended position between two poses; orientation comes from `src`.
pub fn towards_pose(src: &Pose, dst: &Pose, alpha: f32) -> Pose {
    Pose {
        x: (1.0 - alpha) * src.x + alpha * dst.x,
        y: (1.0 - alpha) * src.y + alpha * dst.y,
        z: (1.0 - alpha) * src.z + alpha * dst.z,
        theta: src.theta,
        upright: src.upright,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::task::TaskKind;
    use crate::sim::types::{Color, Shape};

    #[test]
    fn towards_pose_endpoints_and_blend() {
        let src = Pose::with_z(0.0, 0.0, 0.2);
        let dst = Pose::with_z(1.0, 0.4, 0.0);
        let a0 = towards_pose(&src, &dst, 0.0);
        assert_eq!((a0.x, a0.y), (0.0, 0.0));
        let a1 = towards_pose(&src, &dst, 1.0);
        assert_eq!((a1.x, a1.y), (1.0, 0.4));
        let mid = towards_pose(&src, &dst, 0.5);
        assert!((mid.x - 0.5).abs() < 1e-6 && (mid.y - 0.2).abs() < 1e-6);
        // fixed point
        let fp = towards_pose(&src, &src, 0.7);
        assert_eq!(fp, src);
    }

    #[test]
    fn pre_pick_hovers_above_top() {
        let a = Actor::new(0, Color::Red, Shape::Cube, Pose::at(0.5, 0.5));
        let p = pre_pick_ee_pose(&a);
        assert_eq!((p.x, p.y), (0.5, 0.5));
        assert!((p.z - (a.top_z() + HOVER)).abs() < 1e-6);
    }

    #[test]
    fn pre_push_topple_sits_in_top_band() {
        let a = Actor::new(0, Color::Red, Shape::Cube, Pose::at(0.35, 0.45));
        let p = pre_push_pose(&a, true, None);
        assert!(p.z >= a.pose.z + 0.7 * a.height());
        assert!(p.z < a.top_z());
    }

    #[test]
    fn pose_on_top_adds_extents() {
        let a = Actor::new(0, Color::Red, Shape::Cube, Pose::at(0.3, 0.3));
        let b = Actor::new(1, Color::Blue, Shape::Cube, Pose::at(0.6, 0.6));
        let p = pose_on_top(&a, &b);
        assert_eq!((p.x, p.y), (0.6, 0.6));
        assert!((p.z - b.top_z()).abs() < 1e-6);
        // stacking the held actor there puts its bottom exactly on b's top
        assert!((p.z - (b.pose.z + b.height())).abs() < 1e-6);
    }

    #[test]
    fn next_to_direct_slot_and_occupied_fallback() {
        let (mut scene, _) = Scene::reset(TaskKind::PlaceNextTo, 12000).unwrap();
        let a = scene.actor(0).clone();
        let b = scene.actor(1).clone();
        let p = free_space_next_to(&scene, &a, &b, Direction::Right, "right of").unwrap();
        let off = NEXT_TO_FACTOR * (a.half_extent + b.half_extent);
        assert!((p.x - (b.pose.x + off)).abs() < 1e-6);
        assert!((p.y - b.pose.y).abs() < 1e-6);

        // occupy the slot: the returned pose steps along the ray
        scene.actors[2].pose.x = p.x;
        scene.actors[2].pose.y = p.y;
        let p2 = free_space_next_to(&scene, &a, &b, Direction::Right, "right of").unwrap();
        assert!(p2.x > p.x);
        assert!(!occupied_by_other(&scene, p2.x, p2.y, a.half_extent, a.id));

        // description text never affects the result
        let p3 = free_space_next_to(&scene, &a, &b, Direction::Right, "somewhere else").unwrap();
        assert_eq!(p2, p3);
    }

    #[test]
    fn free_space_avoids_everything() {
        for seed in 12000..12050 {
            let (scene, _) = Scene::reset(TaskKind::Swap, seed).unwrap();
            let a = scene.actor(0).clone();
            let p = free_space(&scene, &a).unwrap();
            assert!(!occupied_by_other(&scene, p.x, p.y, a.half_extent, a.id), "seed {seed}");
            for other in &scene.actors {
                if other.id != a.id {
                    let d = ((other.pose.x - p.x).powi(2) + (other.pose.y - p.y).powi(2)).sqrt();
                    assert!(d > other.half_extent + a.half_extent);
                }
            }
        }
    }
}
