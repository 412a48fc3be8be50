//! Solver policies: small state machines emitting one action per step.
//!
//! Every solver exposes `next_action`/`is_done`, terminates within its step
//! budget (marking `failed` when the budget runs out), and returns the zero
//! action once done.

use crate::sim::scene::{Scene, GRASP_BAND};
use crate::sim::types::{Actor, Pose, MAX_STEP};

use super::poses::{push_direction, PUSH_HEIGHT_FRACTION};

/// Travel height for horizontal moves (clears any 2-stack plus hover room).
pub const SAFE_Z: f32 = 0.32;
const ARRIVE_TOL: f32 = 0.01;
const ALIGN_TOL: f32 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Move3d,
    Pick,
    Place,
    PlaceOnActor,
    PushAlongPath,
    Touch,
    Noop,
}

#[derive(Clone, Debug)]
enum Body {
    Move3d { target: Pose },
    Pick { actor: u32, lift: f32, attach_z: Option<f32> },
    Place { actor: u32, target: Pose, drop: f32, released: bool },
    PlaceOnActor { actor: u32, target_actor: u32, drop: f32, released: bool },
    PushAlongPath { actor: u32, target: Pose },
    Touch { actor: u32, topple: bool },
    Noop,
}

#[derive(Clone, Debug)]
pub struct Solver {
    body: Body,
    done: bool,
    pub failed: bool,
    steps: usize,
    budget: usize,
}

fn prop(cur: f32, target: f32) -> f32 {
    ((target - cur) / MAX_STEP).clamp(-1.0, 1.0)
}

fn grip_of(scene: &Scene) -> f32 {
    if scene.ee.gripper_on {
        1.0
    } else {
        -1.0
    }
}

fn horiz_dist(scene: &Scene, x: f32, y: f32) -> f32 {
    ((scene.ee.x - x).powi(2) + (scene.ee.y - y).powi(2)).sqrt()
}

impl Solver {
    pub fn move3d(target: Pose) -> Solver {
        Solver { body: Body::Move3d { target }, done: false, failed: false, steps: 0, budget: 70 }
    }

    pub fn pick(actor: u32, lift: f32) -> Solver {
        Solver {
            body: Body::Pick { actor, lift, attach_z: None },
            done: false,
            failed: false,
            steps: 0,
            budget: 40,
        }
    }

    pub fn place(actor: u32, target: Pose, drop: f32) -> Solver {
        Solver {
            body: Body::Place { actor, target, drop, released: false },
            done: false,
            failed: false,
            steps: 0,
            budget: 40,
        }
    }

    pub fn place_on_actor(actor: u32, target_actor: u32, drop: f32) -> Solver {
        Solver {
            body: Body::PlaceOnActor { actor, target_actor, drop, released: false },
            done: false,
            failed: false,
            steps: 0,
            budget: 40,
        }
    }

    pub fn push_along_path(actor: u32, target: Pose) -> Solver {
        Solver {
            body: Body::PushAlongPath { actor, target },
            done: false,
            failed: false,
            steps: 0,
            budget: 90,
        }
    }

    pub fn touch(actor: u32, topple: bool) -> Solver {
        Solver { body: Body::Touch { actor, topple }, done: false, failed: false, steps: 0, budget: 30 }
    }

    pub fn noop() -> Solver {
        Solver { body: Body::Noop, done: true, failed: false, steps: 0, budget: 0 }
    }

    pub fn kind(&self) -> SolverKind {
        match self.body {
            Body::Move3d { .. } => SolverKind::Move3d,
            Body::Pick { .. } => SolverKind::Pick,
            Body::Place { .. } => SolverKind::Place,
            Body::PlaceOnActor { .. } => SolverKind::PlaceOnActor,
            Body::PushAlongPath { .. } => SolverKind::PushAlongPath,
            Body::Touch { .. } => SolverKind::Touch,
            Body::Noop => SolverKind::Noop,
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Probe completion against the current scene without stepping.
    pub fn check_done(&mut self, scene: &Scene) -> bool {
        if !self.done && self.completed(scene) {
            self.done = true;
        }
        self.done
    }

    fn completed(&self, scene: &Scene) -> bool {
        match &self.body {
            Body::Move3d { target } => {
                let d = (scene.ee.x - target.x).powi(2)
                    + (scene.ee.y - target.y).powi(2)
                    + (scene.ee.z - target.z).powi(2);
                d.sqrt() <= ARRIVE_TOL
            }
            Body::Pick { actor, lift, attach_z } => {
                scene.held() == Some(*actor)
                    && attach_z.map(|z0| scene.ee.z >= z0 + lift - 1e-4).unwrap_or(false)
            }
            Body::Place { released, .. } | Body::PlaceOnActor { released, .. } => {
                *released && scene.held().is_none()
            }
            Body::PushAlongPath { actor, target } => {
                let a = scene.actor(*actor);
                ((a.pose.x - target.x).powi(2) + (a.pose.y - target.y).powi(2)).sqrt() <= 0.04
            }
            Body::Touch { actor, topple } => {
                let a = scene.actor(*actor);
                if *topple {
                    !a.pose.upright
                } else {
                    let d = horiz_dist(scene, a.pose.x, a.pose.y);
                    d <= a.half_extent + 0.015
                }
            }
            Body::Noop => true,
        }
    }

    pub fn next_action(&mut self, scene: &Scene) -> [f32; 4] {
        if self.check_done(scene) {
            return [0.0; 4];
        }
        self.steps += 1;
        if self.steps > self.budget {
            self.done = true;
            self.failed = true;
            return [0.0; 4];
        }
        match &mut self.body {
            Body::Move3d { target } => {
                let target = *target;
                let grip = grip_of(scene);
                let travel_z = SAFE_Z.max(target.z);
                let hd = horiz_dist(scene, target.x, target.y);
                if hd > ALIGN_TOL {
                    if scene.ee.z < travel_z - ALIGN_TOL {
                        [0.0, 0.0, prop(scene.ee.z, travel_z), grip]
                    } else {
                        [prop(scene.ee.x, target.x), prop(scene.ee.y, target.y), 0.0, grip]
                    }
                } else {
                    [0.0, 0.0, prop(scene.ee.z, target.z), grip]
                }
            }
            Body::Pick { actor, attach_z, .. } => {
                let id = *actor;
                if scene.held() == Some(id) {
                    if attach_z.is_none() {
                        *attach_z = Some(scene.ee.z);
                    }
                    return [0.0, 0.0, 1.0, 1.0];
                }
                let a = scene.actor(id);
                let hd = horiz_dist(scene, a.pose.x, a.pose.y);
                if hd > ALIGN_TOL {
                    // not above the actor: approach at a safe height first
                    if scene.ee.z < SAFE_Z - ALIGN_TOL && scene.ee.z < a.top_z() + 0.1 {
                        [0.0, 0.0, prop(scene.ee.z, SAFE_Z), -1.0]
                    } else {
                        [prop(scene.ee.x, a.pose.x), prop(scene.ee.y, a.pose.y), 0.0, -1.0]
                    }
                } else {
                    let dz = prop(scene.ee.z, a.top_z());
                    let next_z = scene.ee.z + dz * MAX_STEP;
                    let grip = if (next_z - a.top_z()).abs() <= GRASP_BAND { 1.0 } else { -1.0 };
                    [0.0, 0.0, dz, grip]
                }
            }
            Body::Place { actor, target, drop, released } => {
                let target = *target;
                place_step(scene, *actor, target, *drop, released)
            }
            Body::PlaceOnActor { actor, target_actor, drop, released } => {
                let t = scene.actor(*target_actor);
                let target = Pose::with_z(t.pose.x, t.pose.y, t.top_z());
                place_step(scene, *actor, target, *drop, released)
            }
            Body::PushAlongPath { actor, target } => {
                let target = *target;
                let a = scene.actor(*actor).clone();
                let (dx, dy) = push_direction(&a, Some(&target));
                let contact_z = a.pose.z + PUSH_HEIGHT_FRACTION * a.height();
                let behind = (a.pose.x - 0.1 * dx, a.pose.y - 0.1 * dy);
                let to_actor = (a.pose.x - scene.ee.x, a.pose.y - scene.ee.y);
                let along = to_actor.0 * dx + to_actor.1 * dy;
                let perp = (to_actor.0 * dy - to_actor.1 * dx).abs();
                let aligned = along > 0.0
                    && along <= 0.12
                    && perp <= 0.02
                    && (scene.ee.z - contact_z).abs() <= 0.03;
                if aligned {
                    [dx, dy, prop(scene.ee.z, contact_z), -1.0]
                } else {
                    let hd = horiz_dist(scene, behind.0, behind.1);
                    if hd > ALIGN_TOL {
                        if scene.ee.z < SAFE_Z - ALIGN_TOL {
                            [0.0, 0.0, prop(scene.ee.z, SAFE_Z), -1.0]
                        } else {
                            [prop(scene.ee.x, behind.0), prop(scene.ee.y, behind.1), 0.0, -1.0]
                        }
                    } else {
                        [0.0, 0.0, prop(scene.ee.z, contact_z), -1.0]
                    }
                }
            }
            Body::Touch { actor, .. } => {
                let a = scene.actor(*actor);
                let vx = a.pose.x - scene.ee.x;
                let vy = a.pose.y - scene.ee.y;
                let n = (vx * vx + vy * vy).sqrt().max(1e-6);
                // full-speed contact so toppling always clears the speed gate
                [vx / n, vy / n, 0.0, -1.0]
            }
            Body::Noop => [0.0; 4],
        }
    }
}

fn place_step(scene: &Scene, actor: u32, target: Pose, drop: f32, released: &mut bool) -> [f32; 4] {
    if scene.held() != Some(actor) {
        // nothing to place; release path marks completion
        *released = true;
        return [0.0; 4];
    }
    let a: &Actor = scene.actor(actor);
    let drop_z = target.z + a.height() + drop;
    let hd = horiz_dist(scene, target.x, target.y);
    if hd > ALIGN_TOL {
        if scene.ee.z < SAFE_Z - ALIGN_TOL && scene.ee.z < drop_z {
            [0.0, 0.0, prop(scene.ee.z, SAFE_Z), 1.0]
        } else {
            [prop(scene.ee.x, target.x), prop(scene.ee.y, target.y), 0.0, 1.0]
        }
    } else if scene.ee.z > drop_z + ALIGN_TOL {
        [0.0, 0.0, prop(scene.ee.z, drop_z), 1.0]
    } else {
        *released = true;
        [0.0, 0.0, 0.0, -1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::poses::{pre_pick_ee_pose, pre_place_ee_pose, pose_on_top, pre_push_pose};
    use crate::sim::task::TaskKind;

    fn run(scene: &mut Scene, solver: &mut Solver, max: usize) -> usize {
        for k in 0..max {
            if solver.check_done(scene) {
                return k;
            }
            let a = solver.next_action(scene);
            scene.step(a);
        }
        max
    }

    #[test]
    fn move3d_at_target_is_done_immediately() {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12000).unwrap();
        let here = Pose::with_z(scene.ee.x, scene.ee.y, scene.ee.z);
        let mut s = Solver::move3d(here);
        assert!(s.check_done(&scene));
        assert_eq!(s.next_action(&mut scene.clone()), [0.0; 4]);
    }

    #[test]
    fn move3d_reaches_target_within_tolerance() {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12001).unwrap();
        let target = Pose::with_z(0.15, 0.85, 0.1);
        let mut s = Solver::move3d(target);
        let steps = run(&mut scene, &mut s, 100);
        assert!(steps < 100 && !s.failed);
        let d = ((scene.ee.x - 0.15f32).powi(2)
            + (scene.ee.y - 0.85f32).powi(2)
            + (scene.ee.z - 0.1f32).powi(2))
        .sqrt();
        assert!(d <= 0.01, "final distance {d}");
    }

    #[test]
    fn pick_sequence_attaches_and_lifts() {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12002).unwrap();
        let pre = pre_pick_ee_pose(scene.actor(0));
        let mut m = Solver::move3d(pre);
        run(&mut scene, &mut m, 100);
        let z0 = scene.actor(0).pose.z;
        let mut p = Solver::pick(0, 0.1);
        let steps = run(&mut scene, &mut p, 60);
        assert!(steps < 60 && !p.failed);
        assert_eq!(scene.held(), Some(0));
        assert!(scene.actor(0).pose.z - z0 >= 0.1 - 1e-4);
        assert!(scene.check_success());
    }

    #[test]
    fn place_releases_and_actor_snaps_to_support() {
        let (mut scene, _) = Scene::reset(TaskKind::PlaceOnTop, 12003).unwrap();
        // pick role 0
        let mut m = Solver::move3d(pre_pick_ee_pose(scene.actor(0)));
        run(&mut scene, &mut m, 100);
        let mut p = Solver::pick(0, 0.1);
        run(&mut scene, &mut p, 60);
        assert_eq!(scene.held(), Some(0));
        // place on role 1
        let target = pose_on_top(scene.actor(0), scene.actor(1));
        let mut m2 = Solver::move3d(pre_place_ee_pose(scene.actor(0), &target));
        run(&mut scene, &mut m2, 100);
        let mut pl = Solver::place_on_actor(0, 1, 0.02);
        let steps = run(&mut scene, &mut pl, 60);
        assert!(steps < 60 && !pl.failed);
        assert!(scene.held().is_none());
        let a = scene.actor(0);
        let b = scene.actor(1);
        assert!((a.pose.z - b.top_z()).abs() < 1e-5, "snap: {} vs {}", a.pose.z, b.top_z());
        assert!(scene.check_success());
    }

    #[test]
    fn push_reaches_goal() {
        for seed in 12000..12020 {
            let (mut scene, _) = Scene::reset(TaskKind::Push, seed).unwrap();
            let (gx, gy) = scene.goal.unwrap();
            let goal = Pose::at(gx, gy);
            let mut m = Solver::move3d(pre_push_pose(scene.actor(0), false, Some(&goal)));
            run(&mut scene, &mut m, 100);
            let mut p = Solver::push_along_path(0, goal);
            let steps = run(&mut scene, &mut p, 120);
            assert!(steps < 120 && !p.failed, "seed {seed}");
            assert!(scene.check_success(), "seed {seed}");
        }
    }

    #[test]
    fn touch_topples() {
        for seed in 12000..12020 {
            let (mut scene, _) = Scene::reset(TaskKind::Topple, seed).unwrap();
            let mut m = Solver::move3d(pre_push_pose(scene.actor(0), true, None));
            run(&mut scene, &mut m, 100);
            let mut t = Solver::touch(0, true);
            let steps = run(&mut scene, &mut t, 40);
            assert!(steps < 40 && !t.failed, "seed {seed}");
            assert!(scene.check_success(), "seed {seed}");
        }
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12004).unwrap();
        // unreachable pick: actor is never near, EE parked far away
        let mut p = Solver::pick(0, 10.0); // lift target can never be reached
        let mut steps = 0;
        while !p.check_done(&scene) && steps < 200 {
            let a = p.next_action(&scene);
            scene.step(a);
            steps += 1;
        }
        assert!(p.is_done());
        assert!(p.failed);
        assert_eq!(p.next_action(&scene), [0.0; 4]);
    }
}
