//! Executes parsed instructions: evaluates `pose_dict` assignments against
//! the live scene and builds the solver for the command part.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ast::{ActorRef, AssignRhs, Command, EePoseExpr, Instruction, PoseExpr};
use crate::sim::scene::Scene;
use crate::sim::types::Pose;

use super::poses::{
    free_space, free_space_next_to, pose_on_top, pre_pick_ee_pose, pre_place_ee_pose,
    pre_push_pose, PoseError,
};
use super::query::{get_actor, QueryError};
use super::solver::Solver;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("pose_dict has no key '{0}'")]
    MissingKey(String),
    #[error("pick targets actor '{0}' which is already held")]
    PickHeldActor(String),
}

/// Ordered key-to-pose store written by assignment instructions. Insertion
/// order is preserved; re-assignment overwrites in place.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseDict {
    entries: Vec<(String, Pose)>,
}

impl PoseDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &str, pose: Pose) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = pose,
            None => self.entries.push((key.to_string(), pose)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Pose> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, p)| p)
    }

    pub fn keys(&self) -> Vec<&str> {
        self.entries.iter().map(|(k, _)| k.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn resolve_actor(scene: &Scene, r: &ActorRef) -> Result<u32, ExecError> {
    let pos = r.pos.map(|(i, j)| (i, j));
    Ok(get_actor(scene, &r.description(), pos)?.id)
}

fn resolve_pose(scene: &Scene, dict: &PoseDict, expr: &PoseExpr) -> Result<Pose, ExecError> {
    match expr {
        PoseExpr::Key(k) => dict.get(k).copied().ok_or_else(|| ExecError::MissingKey(k.clone())),
        PoseExpr::OnTop(a, b) => {
            let aid = resolve_actor(scene, a)?;
            let bid = resolve_actor(scene, b)?;
            Ok(pose_on_top(scene.actor(aid), scene.actor(bid)))
        }
        PoseExpr::Literal { x, y } => Ok(Pose::at(*x, *y)),
    }
}

fn eval_assign_rhs(scene: &Scene, rhs: &AssignRhs) -> Result<Pose, ExecError> {
    match rhs {
        AssignRhs::FreeSpaceNextTo { actor, next_to, direction } => {
            let a = resolve_actor(scene, actor)?;
            let b = resolve_actor(scene, next_to)?;
            Ok(free_space_next_to(
                scene,
                scene.actor(a),
                scene.actor(b),
                *direction,
                direction.description(),
            )?)
        }
        AssignRhs::FreeSpace { actor } => {
            let a = resolve_actor(scene, actor)?;
            Ok(free_space(scene, scene.actor(a))?)
        }
        AssignRhs::GetPose { actor } => {
            let a = resolve_actor(scene, actor)?;
            Ok(scene.actor(a).pose)
        }
        AssignRhs::Literal { x, y } => Ok(Pose::at(*x, *y)),
    }
}

fn eval_ee_pose(scene: &Scene, dict: &PoseDict, expr: &EePoseExpr) -> Result<Pose, ExecError> {
    match expr {
        EePoseExpr::PrePick { actor } => {
            let a = resolve_actor(scene, actor)?;
            Ok(pre_pick_ee_pose(scene.actor(a)))
        }
        EePoseExpr::PrePlace { actor, target } => {
            let a = resolve_actor(scene, actor)?;
            let t = resolve_pose(scene, dict, target)?;
            Ok(pre_place_ee_pose(scene.actor(a), &t))
        }
        EePoseExpr::PrePushTopple { actor } => {
            let a = resolve_actor(scene, actor)?;
            Ok(pre_push_pose(scene.actor(a), true, None))
        }
        EePoseExpr::PrePushTo { actor, target } => {
            let a = resolve_actor(scene, actor)?;
            let t = resolve_pose(scene, dict, target)?;
            Ok(pre_push_pose(scene.actor(a), false, Some(&t)))
        }
        EePoseExpr::Key(k) => {
            dict.get(k).copied().ok_or_else(|| ExecError::MissingKey(k.clone()))
        }
    }
}

/// Evaluate an instruction's assignment (storing the pose) and construct the
/// solver for its command. Live instructions only; the caller handles
/// commented ones (they continue the running solver).
pub fn begin_instruction(
    scene: &Scene,
    dict: &mut PoseDict,
    instr: &Instruction,
) -> Result<Solver, ExecError> {
    if let Some(assign) = &instr.assign {
        let pose = eval_assign_rhs(scene, &assign.rhs)?;
        dict.insert(&assign.key, pose);
    }
    match &instr.command {
        Command::Move3d { target } => {
            let t = eval_ee_pose(scene, dict, target)?;
            Ok(Solver::move3d(t))
        }
        Command::Pick { actor } => {
            let a = resolve_actor(scene, actor)?;
            if scene.held() == Some(a) {
                return Err(ExecError::PickHeldActor(actor.description()));
            }
            Ok(Solver::pick(a, 0.1))
        }
        Command::Place { actor, target } => {
            let a = resolve_actor(scene, actor)?;
            let t = resolve_pose(scene, dict, target)?;
            Ok(Solver::place(a, t, 0.02))
        }
        Command::PlaceOnActor { actor, target_actor, .. } => {
            let a = resolve_actor(scene, actor)?;
            let b = resolve_actor(scene, target_actor)?;
            Ok(Solver::place_on_actor(a, b, 0.02))
        }
        Command::Touch { actor, topple, .. } => {
            let a = resolve_actor(scene, actor)?;
            Ok(Solver::touch(a, *topple))
        }
        Command::PushAlongPath { actor, target } => {
            let a = resolve_actor(scene, actor)?;
            let t = resolve_pose(scene, dict, target)?;
            Ok(Solver::push_along_path(a, t))
        }
        Command::Done => Ok(Solver::noop()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse;
    use crate::sim::task::TaskKind;

    #[test]
    fn assignment_evaluates_and_stores() {
        let (scene, _) = Scene::reset(TaskKind::PlaceNextTo, 12000).unwrap();
        let a = scene.actor(0).description();
        let b = scene.actor(1).description();
        let text = format!(
            "pose_dict['pose0'] = free_space_next_to(get_actor('{a}'), get_actor('{b}'), \
             direction=[1, 0], description='right of')\n\
             move3d(ee_target_pose=pre_pick_ee_pose(get_actor('{a}')))"
        );
        let instr = parse(&text).unwrap();
        let mut dict = PoseDict::new();
        let solver = begin_instruction(&scene, &mut dict, &instr).unwrap();
        assert_eq!(dict.len(), 1);
        assert!(dict.get("pose0").is_some());
        assert!(!solver.is_done());
    }

    #[test]
    fn missing_key_is_an_error() {
        let (scene, _) = Scene::reset(TaskKind::PlaceNextTo, 12000).unwrap();
        let a = scene.actor(0).description();
        let text = format!("place(get_actor('{a}'), target_pose=pose_dict['nope'])");
        let instr = parse(&text).unwrap();
        let mut dict = PoseDict::new();
        assert!(matches!(
            begin_instruction(&scene, &mut dict, &instr),
            Err(ExecError::MissingKey(_))
        ));
    }

    #[test]
    fn pick_of_held_actor_is_a_precondition_violation() {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12000).unwrap();
        scene.ee.held_actor = Some(0);
        scene.ee.gripper_on = true;
        let text = format!("pick(get_actor('{}'))", scene.actor(0).description());
        let instr = parse(&text).unwrap();
        let mut dict = PoseDict::new();
        assert!(matches!(
            begin_instruction(&scene, &mut dict, &instr),
            Err(ExecError::PickHeldActor(_))
        ));
    }

    #[test]
    fn pose_dict_overwrites_in_place_keeping_order() {
        let mut d = PoseDict::new();
        d.insert("a", Pose::at(0.1, 0.1));
        d.insert("b", Pose::at(0.2, 0.2));
        d.insert("a", Pose::at(0.9, 0.9));
        assert_eq!(d.keys(), vec!["a", "b"]);
        assert_eq!(d.get("a").unwrap().x, 0.9);
    }
}
