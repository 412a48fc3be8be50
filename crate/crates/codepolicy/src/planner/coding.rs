//! Mapping between instructions and the planner's categorical output heads.
//!
//! The decode is structured: a template id plus typed argument heads spans
//! exactly the statement forms the scripted policies produce, so greedy
//! argmax decoding always renders back into the grammar.

use crate::dsl::ast::{ActorRef, Assign, AssignRhs, Command, EePoseExpr, Instruction, PoseExpr, TemplateId};
use crate::sim::types::{cell_center, grid_cell, Color, Direction, Shape, GRID};

pub const N_TEMPLATES: usize = TemplateId::DECODABLE.len();
pub const N_COLORS: usize = Color::ALL.len();
pub const N_SHAPES: usize = Shape::ALL.len();
pub const N_DIRECTIONS: usize = Direction::ALL.len();
/// Cap on referencable pose keys (`pose0`..`pose7`).
pub const N_KEYS: usize = 8;
pub const N_CELLS: usize = GRID;

/// Per-head targets of one instruction. `None` marks a head that is
/// inactive for the sample's template.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodeTargets {
    pub commented: Option<usize>,
    pub template: Option<usize>,
    pub color_a: Option<usize>,
    pub shape_a: Option<usize>,
    pub has_pos_a: Option<usize>,
    pub pos_a_i: Option<usize>,
    pub pos_a_j: Option<usize>,
    pub color_b: Option<usize>,
    pub shape_b: Option<usize>,
    pub has_pos_b: Option<usize>,
    pub pos_b_i: Option<usize>,
    pub pos_b_j: Option<usize>,
    pub direction: Option<usize>,
    pub key_ref: Option<usize>,
    pub lit_i: Option<usize>,
    pub lit_j: Option<usize>,
    pub presence: Option<usize>,
}

fn key_index(key: &str) -> Option<usize> {
    key.strip_prefix("pose").and_then(|s| s.parse::<usize>().ok()).filter(|&i| i < N_KEYS)
}

fn actor_a_of(instr: &Instruction) -> Option<ActorRef> {
    match &instr.command {
        Command::Move3d { target } => match target {
            EePoseExpr::PrePick { actor }
            | EePoseExpr::PrePlace { actor, .. }
            | EePoseExpr::PrePushTopple { actor }
            | EePoseExpr::PrePushTo { actor, .. } => Some(*actor),
            EePoseExpr::Key(_) => None,
        },
        Command::Pick { actor }
        | Command::Place { actor, .. }
        | Command::PlaceOnActor { actor, .. }
        | Command::Touch { actor, .. }
        | Command::PushAlongPath { actor, .. } => Some(*actor),
        Command::Done => None,
    }
}

fn actor_b_of(instr: &Instruction) -> Option<ActorRef> {
    if let Some(a) = &instr.assign {
        if let AssignRhs::FreeSpaceNextTo { next_to, .. } = &a.rhs {
            return Some(*next_to);
        }
    }
    match &instr.command {
        Command::PlaceOnActor { target_actor, .. } => Some(*target_actor),
        Command::Move3d { target: EePoseExpr::PrePlace { target: PoseExpr::OnTop(_, b), .. } } => {
            Some(*b)
        }
        _ => None,
    }
}

fn key_ref_of(instr: &Instruction) -> Option<usize> {
    let from_pose = |p: &PoseExpr| match p {
        PoseExpr::Key(k) => key_index(k),
        _ => None,
    };
    match instr.template() {
        TemplateId::MovePrePlaceKey => match &instr.command {
            Command::Move3d { target: EePoseExpr::PrePlace { target, .. } } => from_pose(target),
            _ => None,
        },
        TemplateId::PlaceKey => match &instr.command {
            Command::Place { target, .. } => from_pose(target),
            _ => None,
        },
        TemplateId::PushAlongPathKey => match &instr.command {
            Command::PushAlongPath { target, .. } => from_pose(target),
            _ => None,
        },
        _ => None,
    }
}

fn literal_of(instr: &Instruction) -> Option<(usize, usize)> {
    if let Some(a) = &instr.assign {
        if let AssignRhs::Literal { x, y } = a.rhs {
            return Some(grid_cell(x, y));
        }
    }
    None
}

fn direction_of(instr: &Instruction) -> Option<Direction> {
    instr.assign.as_ref().and_then(|a| match &a.rhs {
        AssignRhs::FreeSpaceNextTo { direction, .. } => Some(*direction),
        _ => None,
    })
}

/// Encode an instruction into head targets. Unsupported (non-decodable)
/// instructions return `None`.
pub fn encode(instr: &Instruction) -> Option<CodeTargets> {
    let template = instr.template();
    if template == TemplateId::Other {
        return None;
    }
    let mut t = CodeTargets {
        commented: Some(instr.commented as usize),
        template: Some(template.index()),
        ..Default::default()
    };
    if let Some(a) = actor_a_of(instr) {
        t.color_a = Some(a.color.index());
        t.shape_a = Some(a.shape.index());
        t.has_pos_a = Some(a.pos.is_some() as usize);
        if let Some((i, j)) = a.pos {
            t.pos_a_i = Some(i as usize);
            t.pos_a_j = Some(j as usize);
        }
    }
    if let Some(b) = actor_b_of(instr) {
        t.color_b = Some(b.color.index());
        t.shape_b = Some(b.shape.index());
        t.has_pos_b = Some(b.pos.is_some() as usize);
        if let Some((i, j)) = b.pos {
            t.pos_b_i = Some(i as usize);
            t.pos_b_j = Some(j as usize);
        }
    }
    if let Some(d) = direction_of(instr) {
        t.direction = Some(d.index());
    }
    if let Some(k) = key_ref_of(instr) {
        t.key_ref = Some(k);
    } else if matches!(
        template,
        TemplateId::MovePrePlaceKey | TemplateId::PlaceKey | TemplateId::PushAlongPathKey
    ) {
        // references a non-generatable key; not producible by the decoder
        return None;
    }
    if let Some((i, j)) = literal_of(instr) {
        t.lit_i = Some(i);
        t.lit_j = Some(j);
    }
    Some(t)
}

/// Greedy argmaxes of every head, as produced by the model.
#[derive(Clone, Debug, Default)]
pub struct HeadChoices {
    pub commented: usize,
    pub template: usize,
    pub color_a: usize,
    pub shape_a: usize,
    pub has_pos_a: usize,
    pub pos_a_i: usize,
    pub pos_a_j: usize,
    pub color_b: usize,
    pub shape_b: usize,
    pub has_pos_b: usize,
    pub pos_b_i: usize,
    pub pos_b_j: usize,
    pub direction: usize,
    pub key_ref: usize,
    pub lit_i: usize,
    pub lit_j: usize,
}

fn actor_from(color: usize, shape: usize, has_pos: usize, i: usize, j: usize) -> ActorRef {
    let mut a = ActorRef::new(Color::from_index(color), Shape::from_index(shape));
    if has_pos == 1 {
        a.pos = Some((i as u8, j as u8));
    }
    a
}

/// Build a live instruction from head choices. `assign_count` names newly
/// generated pose keys; references clamp to existing keys.
pub fn decode(choices: &HeadChoices, assign_count: usize) -> Instruction {
    let template = TemplateId::DECODABLE[choices.template.min(N_TEMPLATES - 1)];
    let a = actor_from(
        choices.color_a,
        choices.shape_a,
        choices.has_pos_a,
        choices.pos_a_i,
        choices.pos_a_j,
    );
    let b = actor_from(
        choices.color_b,
        choices.shape_b,
        choices.has_pos_b,
        choices.pos_b_i,
        choices.pos_b_j,
    );
    let new_key = format!("pose{}", assign_count.min(N_KEYS - 1));
    let ref_key = format!("pose{}", choices.key_ref.min(assign_count.saturating_sub(1)));
    let (lx, ly) = cell_center(choices.lit_i.min(N_CELLS - 1), choices.lit_j.min(N_CELLS - 1));
    let direction = Direction::from_index(choices.direction.min(N_DIRECTIONS - 1));

    match template {
        TemplateId::MovePrePick => {
            Instruction::new(Command::Move3d { target: EePoseExpr::PrePick { actor: a } })
        }
        TemplateId::AssignNextToMovePrePick => Instruction::with_assign(
            Assign {
                key: new_key,
                rhs: AssignRhs::FreeSpaceNextTo { actor: a, next_to: b, direction },
            },
            Command::Move3d { target: EePoseExpr::PrePick { actor: a } },
        ),
        TemplateId::AssignFreeSpaceMovePrePlace => Instruction::with_assign(
            Assign { key: new_key.clone(), rhs: AssignRhs::FreeSpace { actor: a } },
            Command::Move3d {
                target: EePoseExpr::PrePlace { actor: a, target: PoseExpr::Key(new_key) },
            },
        ),
        TemplateId::AssignPoseMovePrePick => Instruction::with_assign(
            Assign { key: new_key, rhs: AssignRhs::Literal { x: lx, y: ly } },
            Command::Move3d { target: EePoseExpr::PrePick { actor: a } },
        ),
        TemplateId::AssignPoseMovePrePush => Instruction::with_assign(
            Assign { key: new_key.clone(), rhs: AssignRhs::Literal { x: lx, y: ly } },
            Command::Move3d {
                target: EePoseExpr::PrePushTo { actor: a, target: PoseExpr::Key(new_key) },
            },
        ),
        TemplateId::Pick => Instruction::new(Command::Pick { actor: a }),
        TemplateId::MovePrePlaceKey => Instruction::new(Command::Move3d {
            target: EePoseExpr::PrePlace { actor: a, target: PoseExpr::Key(ref_key) },
        }),
        TemplateId::MovePrePlaceOnTop => Instruction::new(Command::Move3d {
            target: EePoseExpr::PrePlace { actor: a, target: PoseExpr::OnTop(a, b) },
        }),
        TemplateId::PlaceKey => {
            Instruction::new(Command::Place { actor: a, target: PoseExpr::Key(ref_key) })
        }
        TemplateId::PlaceOnActor => Instruction::new(Command::PlaceOnActor {
            actor: a,
            target_actor: b,
            target: PoseExpr::OnTop(a, b),
        }),
        TemplateId::MovePrePushTopple => {
            Instruction::new(Command::Move3d { target: EePoseExpr::PrePushTopple { actor: a } })
        }
        TemplateId::TouchTopple => {
            Instruction::new(Command::Touch { actor: a, push: false, topple: true })
        }
        TemplateId::PushAlongPathKey => {
            Instruction::new(Command::PushAlongPath { actor: a, target: PoseExpr::Key(ref_key) })
        }
        TemplateId::Done | TemplateId::Other => Instruction::new(Command::Done),
    }
}

/// Targets -> choices, for round-trip checks and teacher forcing.
pub fn choices_from_targets(t: &CodeTargets) -> HeadChoices {
    HeadChoices {
        commented: t.commented.unwrap_or(0),
        template: t.template.unwrap_or(0),
        color_a: t.color_a.unwrap_or(0),
        shape_a: t.shape_a.unwrap_or(0),
        has_pos_a: t.has_pos_a.unwrap_or(0),
        pos_a_i: t.pos_a_i.unwrap_or(0),
        pos_a_j: t.pos_a_j.unwrap_or(0),
        color_b: t.color_b.unwrap_or(0),
        shape_b: t.shape_b.unwrap_or(0),
        has_pos_b: t.has_pos_b.unwrap_or(0),
        pos_b_i: t.pos_b_i.unwrap_or(0),
        pos_b_j: t.pos_b_j.unwrap_or(0),
        direction: t.direction.unwrap_or(0),
        key_ref: t.key_ref.unwrap_or(0),
        lit_i: t.lit_i.unwrap_or(0),
        lit_j: t.lit_j.unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::generate_dataset;
    use crate::sim::task::TaskKind;

    #[test]
    fn oracle_instructions_roundtrip_through_heads() {
        // For every key-step the oracle can produce, encode -> decode must
        // reproduce the live instruction text exactly (given the right
        // assignment count).
        for kind in TaskKind::ALL {
            let ds = generate_dataset(kind, 2, 12000).unwrap();
            for r in &ds.records {
                let mut assign_count = 0usize;
                for s in &r.steps {
                    if !s.is_keystep {
                        continue;
                    }
                    let instr = crate::dsl::parse(&s.instruction).unwrap();
                    let targets = encode(&instr).unwrap_or_else(|| {
                        panic!("{kind:?}: unencodable key-step {:?}", s.instruction)
                    });
                    let decoded = decode(&choices_from_targets(&targets), assign_count);
                    assert_eq!(
                        decoded.render(),
                        s.instruction,
                        "{kind:?} key-step mismatch"
                    );
                    if instr.assign.is_some() {
                        assign_count += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn key_reference_clamps_to_existing() {
        let mut c = HeadChoices { template: TemplateId::PlaceKey.index(), key_ref: 7, ..Default::default() };
        let i = decode(&c, 2);
        assert!(i.render().contains("pose_dict['pose1']"), "{}", i.render());
        c.key_ref = 0;
        let i = decode(&c, 2);
        assert!(i.render().contains("pose_dict['pose0']"));
    }

    #[test]
    fn decoded_instructions_always_parse(){
        // decode stays inside the grammar for arbitrary head choices
        for template in 0..N_TEMPLATES {
            let c = HeadChoices {
                template,
                color_a: 3,
                shape_a: 2,
                has_pos_a: 1,
                pos_a_i: 9,
                pos_a_j: 0,
                color_b: 5,
                shape_b: 1,
                direction: 2,
                key_ref: 3,
                lit_i: 4,
                lit_j: 8,
                ..Default::default()
            };
            let instr = decode(&c, 1);
            let text = instr.render();
            let parsed = crate::dsl::parse(&text).unwrap();
            assert_eq!(parsed.render(), text);
        }
    }
}
