//! Statement forms of the robot-API DSL and their canonical rendering.
//!
//! An instruction is one statement block: an optional `pose_dict['…'] = …`
//! assignment line followed by a command line. Canonical text uses single
//! quotes, one space after commas, and keyword arguments exactly as in the
//! documented API, so `render(parse(text)) == text` holds for canonical
//! input and prefix matching operates on stable characters.

use serde::{Deserialize, Serialize};

use crate::sim::types::{Color, Direction, Shape};

/// `get_actor('<color> <shape>'[, actor_pos=(i, j)])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActorRef {
    pub color: Color,
    pub shape: Shape,
    pub pos: Option<(u8, u8)>,
}

impl ActorRef {
    pub fn new(color: Color, shape: Shape) -> Self {
        Self { color, shape, pos: None }
    }

    pub fn with_pos(color: Color, shape: Shape, pos: (u8, u8)) -> Self {
        Self { color, shape, pos: Some(pos) }
    }

    pub fn description(&self) -> String {
        format!("{} {}", self.color.name(), self.shape.name())
    }

    fn render(&self) -> String {
        match self.pos {
            Some((i, j)) => {
                format!("get_actor('{}', actor_pos=({}, {}))", self.description(), i, j)
            }
            None => format!("get_actor('{}')", self.description()),
        }
    }
}

/// A pose-valued argument (`target_pose=…`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PoseExpr {
    /// `pose_dict['key']`
    Key(String),
    /// `pose_on_top(actor, target_actor)`
    OnTop(ActorRef, ActorRef),
    /// `Pose(x, y)` with two-decimal rendering
    Literal { x: f32, y: f32 },
}

impl PoseExpr {
    fn render(&self) -> String {
        match self {
            PoseExpr::Key(k) => format!("pose_dict['{k}']"),
            PoseExpr::OnTop(a, b) => format!("pose_on_top({}, {})", a.render(), b.render()),
            PoseExpr::Literal { x, y } => format!("Pose({x:.2}, {y:.2})"),
        }
    }
}

/// Right-hand side of a `pose_dict` assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AssignRhs {
    FreeSpaceNextTo { actor: ActorRef, next_to: ActorRef, direction: Direction },
    FreeSpace { actor: ActorRef },
    GetPose { actor: ActorRef },
    Literal { x: f32, y: f32 },
}

impl AssignRhs {
    fn render(&self) -> String {
        match self {
            AssignRhs::FreeSpaceNextTo { actor, next_to, direction } => {
                let (dx, dy) = direction.ints();
                format!(
                    "free_space_next_to({}, {}, direction=[{}, {}], description='{}')",
                    actor.render(),
                    next_to.render(),
                    dx,
                    dy,
                    direction.description()
                )
            }
            AssignRhs::FreeSpace { actor } => format!("free_space({})", actor.render()),
            AssignRhs::GetPose { actor } => format!("get_pose({})", actor.render()),
            AssignRhs::Literal { x, y } => format!("Pose({x:.2}, {y:.2})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assign {
    pub key: String,
    pub rhs: AssignRhs,
}

/// The target of a `move3d(ee_target_pose=…)` call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EePoseExpr {
    PrePick { actor: ActorRef },
    PrePlace { actor: ActorRef, target: PoseExpr },
    PrePushTopple { actor: ActorRef },
    PrePushTo { actor: ActorRef, target: PoseExpr },
    Key(String),
}

impl EePoseExpr {
    fn render(&self) -> String {
        match self {
            EePoseExpr::PrePick { actor } => format!("pre_pick_ee_pose({})", actor.render()),
            EePoseExpr::PrePlace { actor, target } => {
                format!("pre_place_ee_pose({}, target_pose={})", actor.render(), target.render())
            }
            EePoseExpr::PrePushTopple { actor } => {
                format!("pre_push_pose({}, topple=True)", actor.render())
            }
            EePoseExpr::PrePushTo { actor, target } => {
                format!("pre_push_pose({}, target_pose={})", actor.render(), target.render())
            }
            EePoseExpr::Key(k) => format!("pose_dict['{k}']"),
        }
    }
}

/// The command line of a statement block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Move3d { target: EePoseExpr },
    Pick { actor: ActorRef },
    Place { actor: ActorRef, target: PoseExpr },
    PlaceOnActor { actor: ActorRef, target_actor: ActorRef, target: PoseExpr },
    Touch { actor: ActorRef, push: bool, topple: bool },
    PushAlongPath { actor: ActorRef, target: PoseExpr },
    Done,
}

impl Command {
    fn render(&self) -> String {
        match self {
            Command::Move3d { target } => format!("move3d(ee_target_pose={})", target.render()),
            Command::Pick { actor } => format!("pick({})", actor.render()),
            Command::Place { actor, target } => {
                format!("place({}, target_pose={})", actor.render(), target.render())
            }
            Command::PlaceOnActor { actor, target_actor, target } => format!(
                "place_on_actor({}, target_actor={}, target_pose={})",
                actor.render(),
                target_actor.render(),
                target.render()
            ),
            Command::Touch { actor, push, topple } => {
                let mut s = format!("touch({}", actor.render());
                if *push {
                    s.push_str(", push=True");
                }
                if *topple {
                    s.push_str(", topple=True");
                }
                s.push(')');
                s
            }
            Command::PushAlongPath { actor, target } => {
                format!("push_along_path({}, target_pose={})", actor.render(), target.render())
            }
            Command::Done => "done".to_string(),
        }
    }
}

/// One parsed statement block of a code trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub assign: Option<Assign>,
    pub command: Command,
    pub commented: bool,
}

impl Instruction {
    pub fn new(command: Command) -> Self {
        Self { assign: None, command, commented: false }
    }

    pub fn with_assign(assign: Assign, command: Command) -> Self {
        Self { assign: Some(assign), command, commented: false }
    }

    pub fn commented(&self) -> Instruction {
        Instruction { assign: self.assign.clone(), command: self.command.clone(), commented: true }
    }

    pub fn live(&self) -> Instruction {
        Instruction { assign: self.assign.clone(), command: self.command.clone(), commented: false }
    }

    /// Canonical text. Commented instructions have every line prefixed "# ".
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        if let Some(a) = &self.assign {
            lines.push(format!("pose_dict['{}'] = {}", a.key, a.rhs.render()));
        }
        lines.push(self.command.render());
        if self.commented {
            lines.iter().map(|l| format!("# {l}")).collect::<Vec<_>>().join("\n")
        } else {
            lines.join("\n")
        }
    }

    pub fn template(&self) -> TemplateId {
        TemplateId::of(self)
    }
}

/// Closed set of statement forms the oracle produces (and the planner
/// decodes). The shape of the block determines the id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    MovePrePick,
    AssignNextToMovePrePick,
    AssignFreeSpaceMovePrePlace,
    AssignPoseMovePrePick,
    AssignPoseMovePrePush,
    Pick,
    MovePrePlaceKey,
    MovePrePlaceOnTop,
    PlaceKey,
    PlaceOnActor,
    MovePrePushTopple,
    TouchTopple,
    PushAlongPathKey,
    Done,
    /// Parseable but outside the oracle-producible set.
    Other,
}

impl TemplateId {
    pub const DECODABLE: [TemplateId; 14] = [
        TemplateId::MovePrePick,
        TemplateId::AssignNextToMovePrePick,
        TemplateId::AssignFreeSpaceMovePrePlace,
        TemplateId::AssignPoseMovePrePick,
        TemplateId::AssignPoseMovePrePush,
        TemplateId::Pick,
        TemplateId::MovePrePlaceKey,
        TemplateId::MovePrePlaceOnTop,
        TemplateId::PlaceKey,
        TemplateId::PlaceOnActor,
        TemplateId::MovePrePushTopple,
        TemplateId::TouchTopple,
        TemplateId::PushAlongPathKey,
        TemplateId::Done,
    ];

    pub fn index(self) -> usize {
        Self::DECODABLE.iter().position(|&t| t == self).unwrap_or(Self::DECODABLE.len())
    }

    pub fn of(instr: &Instruction) -> TemplateId {
        match (&instr.assign, &instr.command) {
            (None, Command::Move3d { target }) => match target {
                EePoseExpr::PrePick { .. } => TemplateId::MovePrePick,
                EePoseExpr::PrePlace { target: PoseExpr::Key(_), .. } => TemplateId::MovePrePlaceKey,
                EePoseExpr::PrePlace { target: PoseExpr::OnTop(..), .. } => {
                    TemplateId::MovePrePlaceOnTop
                }
                EePoseExpr::PrePushTopple { .. } => TemplateId::MovePrePushTopple,
                _ => TemplateId::Other,
            },
            (None, Command::Pick { .. }) => TemplateId::Pick,
            (None, Command::Place { target: PoseExpr::Key(_), .. }) => TemplateId::PlaceKey,
            (None, Command::PlaceOnActor { target: PoseExpr::OnTop(..), .. }) => {
                TemplateId::PlaceOnActor
            }
            (None, Command::Touch { push: false, topple: true, .. }) => TemplateId::TouchTopple,
            (None, Command::PushAlongPath { target: PoseExpr::Key(_), .. }) => {
                TemplateId::PushAlongPathKey
            }
            (None, Command::Done) => TemplateId::Done,
            (Some(a), Command::Move3d { target }) => match (&a.rhs, target) {
                (AssignRhs::FreeSpaceNextTo { .. }, EePoseExpr::PrePick { .. }) => {
                    TemplateId::AssignNextToMovePrePick
                }
                (AssignRhs::FreeSpace { .. }, EePoseExpr::PrePlace { target: PoseExpr::Key(_), .. }) => {
                    TemplateId::AssignFreeSpaceMovePrePlace
                }
                (AssignRhs::Literal { .. }, EePoseExpr::PrePick { .. }) => {
                    TemplateId::AssignPoseMovePrePick
                }
                (AssignRhs::Literal { .. }, EePoseExpr::PrePushTo { target: PoseExpr::Key(_), .. }) => {
                    TemplateId::AssignPoseMovePrePush
                }
                _ => TemplateId::Other,
            },
            _ => TemplateId::Other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn red_cube() -> ActorRef {
        ActorRef::new(Color::Red, Shape::Cube)
    }

    fn blue_cyl() -> ActorRef {
        ActorRef::new(Color::Blue, Shape::Cylinder)
    }

    #[test]
    fn render_pick_with_pos() {
        let i = Instruction::new(Command::Pick {
            actor: ActorRef::with_pos(Color::Red, Shape::Cube, (3, 4)),
        });
        assert_eq!(i.render(), "pick(get_actor('red cube', actor_pos=(3, 4)))");
    }

    #[test]
    fn render_assignment_block_and_comment() {
        let i = Instruction::with_assign(
            Assign {
                key: "pose0".into(),
                rhs: AssignRhs::FreeSpaceNextTo {
                    actor: red_cube(),
                    next_to: blue_cyl(),
                    direction: Direction::Right,
                },
            },
            Command::Move3d { target: EePoseExpr::PrePick { actor: red_cube() } },
        );
        assert_eq!(
            i.render(),
            "pose_dict['pose0'] = free_space_next_to(get_actor('red cube'), \
             get_actor('blue cylinder'), direction=[1, 0], description='right of')\n\
             move3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))"
        );
        let c = i.commented();
        for line in c.render().lines() {
            assert!(line.starts_with("# "));
        }
        assert_eq!(i.template(), TemplateId::AssignNextToMovePrePick);
        assert_eq!(c.template(), TemplateId::AssignNextToMovePrePick);
    }

    #[test]
    fn render_pose_literal_two_decimals() {
        let i = Instruction::with_assign(
            Assign { key: "pose1".into(), rhs: AssignRhs::Literal { x: 0.85, y: 0.35 } },
            Command::Move3d {
                target: EePoseExpr::PrePushTo {
                    actor: red_cube(),
                    target: PoseExpr::Key("pose1".into()),
                },
            },
        );
        assert_eq!(
            i.render(),
            "pose_dict['pose1'] = Pose(0.85, 0.35)\n\
             move3d(ee_target_pose=pre_push_pose(get_actor('red cube'), target_pose=pose_dict['pose1']))"
        );
        assert_eq!(i.template(), TemplateId::AssignPoseMovePrePush);
    }

    #[test]
    fn template_ids_cover_decodable_set() {
        for (k, t) in TemplateId::DECODABLE.iter().enumerate() {
            assert_eq!(t.index(), k);
        }
    }
}
