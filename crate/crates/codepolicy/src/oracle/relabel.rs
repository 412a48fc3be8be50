//! Label strategies that involve the trained planner: relabeling stored
//! trajectories with its per-step predictions, and generating fresh
//! demonstrations by letting its key-steps drive the solvers.

use crate::api::exec::{begin_instruction, PoseDict};
use crate::dsl::ast::Command;
use crate::dsl::memory::{update_memory, MemoryBuffer};
use crate::dsl::trace::preprocess_trace;
use crate::nn::optim::ParamView;
use crate::planner::infer::predict_step;
use crate::planner::model::PlannerModel;
use crate::planner::predict_keystep;
use crate::sim::scene::Scene;
use crate::sim::task::TaskKind;

use super::dataset::{Dataset, LabelSource, TrajectoryRecord};
use super::OracleError;

/// Replace the stored labels with the planner's greedy per-step
/// predictions, maintaining the planner's own memory along the way.
/// Observations and actions stay untouched.
pub fn relabel_with_planner(record: &TrajectoryRecord, planner: &PlannerModel) -> TrajectoryRecord {
    let mut out = record.clone();
    out.label_source = LabelSource::PlannerRelabel;
    let mut memory = MemoryBuffer::new();
    for step in out.steps.iter_mut() {
        let obs = step.obs.to_observation();
        let instr = predict_step(
            planner,
            ParamView::Ema,
            &obs.base,
            &obs.proprio,
            record.task.kind,
            &record.task.descriptors,
            record.task.direction,
            &memory,
        );
        memory = update_memory(&memory, &instr);
        step.instruction = instr.render();
        step.is_keystep = !instr.commented;
    }
    out
}

pub fn relabel_dataset(ds: &Dataset, planner: &PlannerModel) -> Dataset {
    Dataset { records: ds.records.iter().map(|r| relabel_with_planner(r, planner)).collect() }
}

/// One episode where the planner's key-step predictions drive the solvers;
/// raw per-step instruction text comes from the planner's own outputs.
pub fn run_exec_rollout(
    kind: TaskKind,
    seed: u64,
    planner: &PlannerModel,
) -> Result<super::OracleRollout, OracleError> {
    let (mut scene, mut obs) = Scene::reset(kind, seed)?;
    let spec = scene.spec.clone();
    let mut memory = MemoryBuffer::new();
    let mut dict = PoseDict::new();
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut raw = Vec::new();
    let mut failed = false;

    'outer: for _ in 0..32 {
        if scene.t >= spec.horizon {
            break;
        }
        let instr = predict_keystep(
            planner,
            ParamView::Ema,
            &obs.base,
            &obs.proprio,
            kind,
            &spec.descriptors,
            spec.direction,
            &memory,
        );
        if matches!(instr.command, Command::Done) {
            let grip = if scene.ee.gripper_on { 1.0 } else { -1.0 };
            let action = [0.0, 0.0, 0.0, grip];
            observations.push(obs.clone());
            actions.push(action);
            raw.push(instr.render());
            scene.step(action);
            break;
        }
        memory = update_memory(&memory, &instr);
        let mut solver = match begin_instruction(&scene, &mut dict, &instr) {
            Ok(s) => s,
            Err(_) => {
                failed = true;
                break;
            }
        };
        let text = instr.render();
        while !solver.check_done(&scene) && scene.t < spec.horizon {
            let action = solver.next_action(&scene);
            observations.push(obs.clone());
            actions.push(action);
            raw.push(text.clone());
            obs = scene.step(action);
            if scene.check_success() {
                break 'outer;
            }
        }
        if solver.failed {
            failed = true;
            break;
        }
    }
    let success = !failed && scene.check_success() && !raw.is_empty();
    Ok(super::OracleRollout { scene, observations, actions, raw_instructions: raw, success })
}

/// Generate a fresh demonstration dataset from planner-driven rollouts;
/// only successes are stored and every label originates from the planner.
pub fn generate_exec_dataset(
    kind: TaskKind,
    count: usize,
    planner: &PlannerModel,
    seed_start: u64,
) -> Result<Dataset, OracleError> {
    assert!(count >= 1);
    let mut records = Vec::with_capacity(count);
    let mut seed = seed_start;
    let mut window_attempts = 0usize;
    let mut window_successes = 0usize;
    while records.len() < count {
        let rollout = run_exec_rollout(kind, seed, planner)?;
        window_attempts += 1;
        if rollout.success {
            window_successes += 1;
            let trace = preprocess_trace(&rollout.raw_instructions).expect("non-empty exec rollout");
            let steps = rollout
                .observations
                .iter()
                .zip(&rollout.actions)
                .zip(trace.steps.iter().enumerate())
                .map(|((obs, action), (t, instr))| super::StepRecord {
                    obs: obs.into(),
                    action: *action,
                    instruction: instr.render(),
                    is_keystep: trace.keysteps.contains(&t),
                })
                .collect();
            records.push(TrajectoryRecord {
                task: rollout.scene.spec.clone(),
                seed,
                steps,
                success: true,
                label_source: LabelSource::Exec,
            });
        }
        if window_attempts == 100 {
            if window_successes < 50 {
                return Err(OracleError::SolverHealth {
                    task: kind.name(),
                    successes: window_successes,
                    window: window_attempts,
                    from: seed + 1 - window_attempts as u64,
                    to: seed,
                });
            }
            window_attempts = 0;
            window_successes = 0;
        }
        seed += 1;
    }
    Ok(Dataset { records })
}
