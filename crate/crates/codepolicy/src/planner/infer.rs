//! Greedy decoding with comment handling, memory coercion, and prefix
//! early stopping.

use crate::dsl::ast::Instruction;
use crate::dsl::memory::MemoryBuffer;
use crate::dsl::trace::{prefix_early_stop, EARLY_STOP_PREFIX};
use crate::nn::graph::Graph;
use crate::nn::optim::ParamView;
use crate::sim::task::TaskKind;
use crate::sim::types::{Color, Direction, Shape};

use super::coding::{decode, HeadChoices};
use super::model::{argmax_row, build_tokens, ee_features, PlannerInput, PlannerModel, PlannerQuery};

/// Run a single-sample forward pass and take every head's argmax.
pub fn forward_choices(
    model: &PlannerModel,
    view: ParamView,
    base: &[f32],
    proprio: Option<&[f32]>,
    query: &PlannerQuery,
) -> HeadChoices {
    let mut g = Graph::new();
    let input = PlannerInput {
        base: base.to_vec(),
        tokens: build_tokens(query),
        ee_feats: proprio.map(ee_features),
    };
    let heads = model.forward(&mut g, view, &[input]);
    HeadChoices {
        commented: argmax_row(g.value(heads.commented), 0),
        template: argmax_row(g.value(heads.template), 0),
        color_a: argmax_row(g.value(heads.color_a), 0),
        shape_a: argmax_row(g.value(heads.shape_a), 0),
        has_pos_a: argmax_row(g.value(heads.has_pos_a), 0),
        pos_a_i: argmax_row(g.value(heads.pos_a_i), 0),
        pos_a_j: argmax_row(g.value(heads.pos_a_j), 0),
        color_b: argmax_row(g.value(heads.color_b), 0),
        shape_b: argmax_row(g.value(heads.shape_b), 0),
        has_pos_b: argmax_row(g.value(heads.has_pos_b), 0),
        pos_b_i: argmax_row(g.value(heads.pos_b_i), 0),
        pos_b_j: argmax_row(g.value(heads.pos_b_j), 0),
        direction: argmax_row(g.value(heads.direction), 0),
        key_ref: argmax_row(g.value(heads.key_ref), 0),
        lit_i: argmax_row(g.value(heads.lit_i), 0),
        lit_j: argmax_row(g.value(heads.lit_j), 0),
    }
}

/// Per-step prediction. Returns the commented rendering of the last
/// key-step when the comment head says so or when the decoded candidate's
/// first characters match it (early stop); a trace must start live, so an
/// empty memory coerces the output to the live decode.
pub fn predict_step(
    model: &PlannerModel,
    view: ParamView,
    base: &[f32],
    proprio: &[f32],
    kind: TaskKind,
    roles: &[(Color, Shape)],
    direction: Option<Direction>,
    memory: &MemoryBuffer,
) -> Instruction {
    let query = PlannerQuery::Code {
        kind,
        roles: roles.to_vec(),
        direction,
        memory: memory.clone(),
        keystep_request: false,
    };
    let choices = forward_choices(model, view, base, Some(proprio), &query);
    let last = memory.last();

    if let Some(last) = last {
        if choices.commented == 1 {
            return last.commented();
        }
        let candidate = decode(&choices, memory.assignment_count());
        if prefix_early_stop(&candidate.commented().render(), last, EARLY_STOP_PREFIX) {
            return last.commented();
        }
        candidate
    } else {
        // empty memory: coerce to a live instruction
        decode(&choices, 0)
    }
}

/// Key-step prediction: the comment head is ignored and the decode is
/// always live.
pub fn predict_keystep(
    model: &PlannerModel,
    view: ParamView,
    base: &[f32],
    proprio: &[f32],
    kind: TaskKind,
    roles: &[(Color, Shape)],
    direction: Option<Direction>,
    memory: &MemoryBuffer,
) -> Instruction {
    let query = PlannerQuery::Code {
        kind,
        roles: roles.to_vec(),
        direction,
        memory: memory.clone(),
        keystep_request: true,
    };
    let choices = forward_choices(model, view, base, Some(proprio), &query);
    decode(&choices, memory.assignment_count())
}

/// Aux probes used by evaluation.
pub fn predict_presence(
    model: &PlannerModel,
    view: ParamView,
    base: &[f32],
    color: Color,
    shape: Shape,
    cell: (usize, usize),
) -> bool {
    let q = PlannerQuery::Presence { color, shape, cell };
    let mut g = Graph::new();
    let input = PlannerInput { base: base.to_vec(), tokens: build_tokens(&q), ee_feats: None };
    let heads = model.forward(&mut g, view, &[input]);
    argmax_row(g.value(heads.presence), 0) == 1
}

pub fn predict_location(
    model: &PlannerModel,
    view: ParamView,
    base: &[f32],
    color: Color,
    shape: Shape,
) -> (usize, usize) {
    let q = PlannerQuery::Location { color, shape };
    let c = forward_choices(model, view, base, None, &q);
    (c.lit_i, c.lit_j)
}
