//! Scripted task plans: the key-step program each task executes, emitted as
//! instructions and materialized lazily against the live scene.

use crate::dsl::ast::{ActorRef, Assign, AssignRhs, Command, EePoseExpr, Instruction, PoseExpr};
use crate::sim::scene::Scene;
use crate::sim::task::TaskKind;
use crate::sim::types::Direction;

/// One abstract key-step; actor cells, pose keys, and literals resolve at
/// the moment the step starts.
#[derive(Clone, Debug)]
pub enum PlanStep {
    MovePrePick { role: u32 },
    AssignNextToMovePrePick { role: u32, next_to: u32, dir: Direction },
    AssignFreeSpaceMovePrePlace { role: u32 },
    AssignInitMovePrePick { role: u32 },
    AssignGoalMovePrePush { role: u32, goal: (f32, f32) },
    Pick { role: u32 },
    MovePrePlaceKey { role: u32, key_ix: usize },
    MovePrePlaceOnTop { role: u32, target: u32 },
    PlaceKey { role: u32, key_ix: usize },
    PlaceOnActor { role: u32, target: u32 },
    MovePrePushTopple { role: u32 },
    TouchTopple { role: u32 },
    PushAlongPathKey { role: u32, key_ix: usize },
    Done,
}

/// The key-step program for a task instance.
pub fn task_plan(scene: &Scene) -> Vec<PlanStep> {
    use PlanStep::*;
    match scene.spec.kind {
        TaskKind::Pick => vec![MovePrePick { role: 0 }, Pick { role: 0 }, Done],
        TaskKind::PlaceNextTo => {
            let dir = scene.spec.direction.expect("PlaceNextTo has a direction");
            vec![
                AssignNextToMovePrePick { role: 0, next_to: 1, dir },
                Pick { role: 0 },
                MovePrePlaceKey { role: 0, key_ix: 0 },
                PlaceKey { role: 0, key_ix: 0 },
                Done,
            ]
        }
        TaskKind::PlaceOnTop => vec![
            MovePrePick { role: 0 },
            Pick { role: 0 },
            MovePrePlaceOnTop { role: 0, target: 1 },
            PlaceOnActor { role: 0, target: 1 },
            Done,
        ],
        TaskKind::Topple => vec![MovePrePushTopple { role: 0 }, TouchTopple { role: 0 }, Done],
        TaskKind::Push => {
            let goal = scene.goal.expect("Push has a goal");
            vec![
                AssignGoalMovePrePush { role: 0, goal },
                PushAlongPathKey { role: 0, key_ix: 0 },
                Done,
            ]
        }
        TaskKind::PushToTarget => {
            let goal = scene.goal.expect("PushToTarget has a goal");
            let start = scene.actor(0).pose;
            // two axis-aligned segments, x first
            let elbow = (goal.0, start.y);
            vec![
                AssignGoalMovePrePush { role: 0, goal: elbow },
                PushAlongPathKey { role: 0, key_ix: 0 },
                AssignGoalMovePrePush { role: 0, goal },
                PushAlongPathKey { role: 0, key_ix: 1 },
                Done,
            ]
        }
        TaskKind::SingleStack => vec![
            MovePrePick { role: 0 },
            Pick { role: 0 },
            MovePrePlaceOnTop { role: 0, target: 1 },
            PlaceOnActor { role: 0, target: 1 },
            MovePrePick { role: 2 },
            Pick { role: 2 },
            MovePrePlaceOnTop { role: 2, target: 0 },
            PlaceOnActor { role: 2, target: 0 },
            Done,
        ],
        TaskKind::ReverseStack => vec![
            MovePrePick { role: 0 },
            Pick { role: 0 },
            MovePrePlaceOnTop { role: 0, target: 2 },
            PlaceOnActor { role: 0, target: 2 },
            MovePrePick { role: 1 },
            Pick { role: 1 },
            MovePrePlaceOnTop { role: 1, target: 0 },
            PlaceOnActor { role: 1, target: 0 },
            Done,
        ],
        TaskKind::StackTopple => vec![
            MovePrePick { role: 0 },
            Pick { role: 0 },
            MovePrePlaceOnTop { role: 0, target: 1 },
            PlaceOnActor { role: 0, target: 1 },
            MovePrePushTopple { role: 0 },
            TouchTopple { role: 0 },
            Done,
        ],
        TaskKind::Swap => vec![
            AssignInitMovePrePick { role: 0 },
            Pick { role: 0 },
            AssignFreeSpaceMovePrePlace { role: 0 },
            PlaceKey { role: 0, key_ix: 1 },
            AssignInitMovePrePick { role: 1 },
            Pick { role: 1 },
            MovePrePlaceKey { role: 1, key_ix: 0 },
            PlaceKey { role: 1, key_ix: 0 },
            MovePrePick { role: 0 },
            Pick { role: 0 },
            MovePrePlaceKey { role: 0, key_ix: 2 },
            PlaceKey { role: 0, key_ix: 2 },
            Done,
        ],
    }
}

/// Reference a role actor, attaching `actor_pos` when another actor in the
/// scene shares its description. Held actors keep their pick-time cell.
pub fn role_ref(scene: &Scene, role: u32) -> ActorRef {
    let a = scene.actor(role);
    let ambiguous = scene
        .actors
        .iter()
        .any(|o| o.id != role && o.color == a.color && o.shape == a.shape);
    if ambiguous {
        let (i, j) = scene.last_table_cell(role);
        ActorRef::with_pos(a.color, a.shape, (i as u8, j as u8))
    } else {
        ActorRef::new(a.color, a.shape)
    }
}

fn key_name(ix: usize) -> String {
    format!("pose{ix}")
}

/// Render the instruction for a plan step against the current scene state.
/// `assign_count` is the number of assignments made so far (names the next
/// pose key).
pub fn materialize(scene: &Scene, step: &PlanStep, assign_count: usize) -> Instruction {
    match step {
        PlanStep::MovePrePick { role } => Instruction::new(Command::Move3d {
            target: EePoseExpr::PrePick { actor: role_ref(scene, *role) },
        }),
        PlanStep::AssignNextToMovePrePick { role, next_to, dir } => Instruction::with_assign(
            Assign {
                key: key_name(assign_count),
                rhs: AssignRhs::FreeSpaceNextTo {
                    actor: role_ref(scene, *role),
                    next_to: role_ref(scene, *next_to),
                    direction: *dir,
                },
            },
            Command::Move3d { target: EePoseExpr::PrePick { actor: role_ref(scene, *role) } },
        ),
        PlanStep::AssignFreeSpaceMovePrePlace { role } => {
            let key = key_name(assign_count);
            Instruction::with_assign(
                Assign { key: key.clone(), rhs: AssignRhs::FreeSpace { actor: role_ref(scene, *role) } },
                Command::Move3d {
                    target: EePoseExpr::PrePlace {
                        actor: role_ref(scene, *role),
                        target: PoseExpr::Key(key),
                    },
                },
            )
        }
        PlanStep::AssignInitMovePrePick { role } => {
            let a = scene.actor(*role);
            Instruction::with_assign(
                Assign {
                    key: key_name(assign_count),
                    rhs: AssignRhs::Literal { x: a.pose.x, y: a.pose.y },
                },
                Command::Move3d { target: EePoseExpr::PrePick { actor: role_ref(scene, *role) } },
            )
        }
        PlanStep::AssignGoalMovePrePush { role, goal } => {
            let key = key_name(assign_count);
            Instruction::with_assign(
                Assign { key: key.clone(), rhs: AssignRhs::Literal { x: goal.0, y: goal.1 } },
                Command::Move3d {
                    target: EePoseExpr::PrePushTo {
                        actor: role_ref(scene, *role),
                        target: PoseExpr::Key(key),
                    },
                },
            )
        }
        PlanStep::Pick { role } => {
            Instruction::new(Command::Pick { actor: role_ref(scene, *role) })
        }
        PlanStep::MovePrePlaceKey { role, key_ix } => Instruction::new(Command::Move3d {
            target: EePoseExpr::PrePlace {
                actor: role_ref(scene, *role),
                target: PoseExpr::Key(key_name(*key_ix)),
            },
        }),
        PlanStep::MovePrePlaceOnTop { role, target } => {
            let a = role_ref(scene, *role);
            let b = role_ref(scene, *target);
            Instruction::new(Command::Move3d {
                target: EePoseExpr::PrePlace { actor: a, target: PoseExpr::OnTop(a, b) },
            })
        }
        PlanStep::PlaceKey { role, key_ix } => Instruction::new(Command::Place {
            actor: role_ref(scene, *role),
            target: PoseExpr::Key(key_name(*key_ix)),
        }),
        PlanStep::PlaceOnActor { role, target } => {
            let a = role_ref(scene, *role);
            let b = role_ref(scene, *target);
            Instruction::new(Command::PlaceOnActor {
                actor: a,
                target_actor: b,
                target: PoseExpr::OnTop(a, b),
            })
        }
        PlanStep::MovePrePushTopple { role } => Instruction::new(Command::Move3d {
            target: EePoseExpr::PrePushTopple { actor: role_ref(scene, *role) },
        }),
        PlanStep::TouchTopple { role } => Instruction::new(Command::Touch {
            actor: role_ref(scene, *role),
            push: false,
            topple: true,
        }),
        PlanStep::PushAlongPathKey { role, key_ix } => {
            Instruction::new(Command::PushAlongPath {
                actor: role_ref(scene, *role),
                target: PoseExpr::Key(key_name(*key_ix)),
            })
        }
        PlanStep::Done => Instruction::new(Command::Done),
    }
}
