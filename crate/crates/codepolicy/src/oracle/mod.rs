//! Dataset factory: scripted rollouts, success filtering, label strategies.

pub mod augment;
pub mod dataset;
pub mod plan;
pub mod relabel;

use thiserror::Error;

pub use augment::time_shift_augment;
pub use relabel::{generate_exec_dataset, relabel_dataset, relabel_with_planner};
pub use dataset::{Dataset, DatasetError, LabelSource, StepRecord, StoredObservation, TrajectoryRecord};

use crate::api::exec::{begin_instruction, ExecError, PoseDict};
use crate::api::solver::Solver;
use crate::dsl::ast::{Command, Instruction};
use crate::dsl::trace::preprocess_trace;
use crate::sim::scene::{Scene, SceneError};
use crate::sim::task::TaskKind;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(
        "solver health: {task} succeeded {successes}/{window} times in the last seed window \
         (seeds {from}..{to}); refusing to continue"
    )]
    SolverHealth { task: &'static str, successes: usize, window: usize, from: u64, to: u64 },
}

/// Raw result of one scripted rollout before key-step preprocessing.
pub struct OracleRollout {
    pub scene: Scene,
    pub observations: Vec<crate::sim::obs::Observation>,
    pub actions: Vec<[f32; 4]>,
    pub raw_instructions: Vec<String>,
    pub success: bool,
}

/// Run the scripted solver composition for one seed, emitting the executed
/// instruction text at every step.
pub fn run_oracle_rollout(kind: TaskKind, seed: u64) -> Result<OracleRollout, OracleError> {
    let (mut scene, mut obs) = Scene::reset(kind, seed)?;
    let plan = plan::task_plan(&scene);
    let mut dict = PoseDict::new();
    let mut plan_ix = 0usize;
    let mut current: Option<(Instruction, Solver)> = None;

    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut raw = Vec::new();
    let mut failed = false;

    'episode: while scene.t < scene.spec.horizon {
        // advance the plan over completed solvers
        loop {
            let need_next = match &mut current {
                None => true,
                Some((_, s)) => {
                    if s.check_done(&scene) {
                        if s.failed {
                            failed = true;
                            break 'episode;
                        }
                        true
                    } else {
                        false
                    }
                }
            };
            if !need_next {
                break;
            }
            if plan_ix >= plan.len() {
                break 'episode;
            }
            let step = &plan[plan_ix];
            plan_ix += 1;
            let instr = plan::materialize(&scene, step, dict.len());
            let solver = begin_instruction(&scene, &mut dict, &instr)?;
            if matches!(instr.command, Command::Done) {
                // one terminal hold step, then the episode ends
                let grip = if scene.ee.gripper_on { 1.0 } else { -1.0 };
                let action = [0.0, 0.0, 0.0, grip];
                observations.push(obs.clone());
                actions.push(action);
                raw.push(instr.render());
                scene.step(action);
                break 'episode;
            }
            current = Some((instr, solver));
        }

        let (instr, solver) = current.as_mut().expect("active solver");
        let action = solver.next_action(&scene);
        observations.push(obs.clone());
        actions.push(action);
        raw.push(instr.render());
        obs = scene.step(action);
    }

    let success = !failed && scene.check_success();
    Ok(OracleRollout { scene, observations, actions, raw_instructions: raw, success })
}

/// Convert a successful rollout into a stored record with key-step labels.
pub fn record_from_rollout(rollout: &OracleRollout, source: LabelSource) -> TrajectoryRecord {
    let trace = preprocess_trace(&rollout.raw_instructions).expect("non-empty rollout");
    let steps = rollout
        .observations
        .iter()
        .zip(&rollout.actions)
        .zip(trace.steps.iter().enumerate())
        .map(|((obs, action), (t, instr))| StepRecord {
            obs: obs.into(),
            action: *action,
            instruction: instr.render(),
            is_keystep: trace.keysteps.contains(&t),
        })
        .collect();
    TrajectoryRecord {
        task: rollout.scene.spec.clone(),
        seed: rollout.scene.spec.seed,
        steps,
        success: rollout.success,
        label_source: source,
    }
}

/// Roll scripted solvers over consecutive seeds starting at `seed_start`
/// until `count` successes accumulate; failures are filtered out. Aborts
/// with a health report when a 100-seed window succeeds less than half the
/// time.
pub fn generate_dataset(kind: TaskKind, count: usize, seed_start: u64) -> Result<Dataset, OracleError> {
    assert!(count >= 1, "dataset needs at least one trajectory");
    let mut records = Vec::with_capacity(count);
    let mut seed = seed_start;
    let mut window_attempts = 0usize;
    let mut window_successes = 0usize;
    while records.len() < count {
        let rollout = run_oracle_rollout(kind, seed)?;
        window_attempts += 1;
        if rollout.success {
            window_successes += 1;
            records.push(record_from_rollout(&rollout, LabelSource::Oracle));
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

/// Fraction of successful scripted rollouts over `n` consecutive seeds.
pub fn oracle_success_rate(kind: TaskKind, seed_start: u64, n: usize) -> f64 {
    let mut ok = 0usize;
    for seed in seed_start..seed_start + n as u64 {
        if let Ok(r) = run_oracle_rollout(kind, seed) {
            if r.success {
                ok += 1;
            }
        }
    }
    ok as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::trace::is_keystep;

    #[test]
    fn topple_rollouts_succeed_with_touch_keystep() {
        let ds = generate_dataset(TaskKind::Topple, 10, 12000).unwrap();
        assert_eq!(ds.len(), 10);
        for r in &ds.records {
            assert!(r.success);
            assert!(r
                .steps
                .iter()
                .any(|s| s.is_keystep && s.instruction.contains("topple=True")));
        }
    }

    #[test]
    fn place_next_to_trace_matches_expected_template() {
        let ds = generate_dataset(TaskKind::PlaceNextTo, 1, 12000).unwrap();
        let r = &ds.records[0];
        let keysteps: Vec<&str> = r
            .steps
            .iter()
            .filter(|s| s.is_keystep)
            .map(|s| s.instruction.as_str())
            .collect();
        assert_eq!(keysteps.len(), 5, "assignment+move, pick, move, place, done");
        assert!(keysteps[0].starts_with("pose_dict['pose0'] = free_space_next_to("));
        assert!(keysteps[0].contains("\nmove3d(ee_target_pose=pre_pick_ee_pose("));
        assert!(keysteps[1].starts_with("pick("));
        assert!(keysteps[2].starts_with("move3d(ee_target_pose=pre_place_ee_pose("));
        assert!(keysteps[2].contains("pose_dict['pose0']"));
        assert!(keysteps[3].starts_with("place("));
        assert_eq!(keysteps[4], "done");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(TaskKind::Pick, 5, 12000).unwrap();
        let b = generate_dataset(TaskKind::Pick, 5, 12000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn keystep_flags_agree_with_text() {
        let ds = generate_dataset(TaskKind::PlaceOnTop, 3, 12100).unwrap();
        for r in &ds.records {
            for s in &r.steps {
                assert_eq!(is_keystep(&s.instruction), s.is_keystep);
            }
        }
    }

    #[test]
    fn swap_has_twelve_keysteps_plus_done() {
        let ds = generate_dataset(TaskKind::Swap, 3, 12000).unwrap();
        for r in &ds.records {
            let ks = r.keystep_indices();
            assert_eq!(ks.len(), 13, "12 manipulation key-steps plus done");
            assert_eq!(ks[0], 0, "a trace starts with a key-step");
            // three pose_dict assignments end up in the cache
            let assignments = r
                .steps
                .iter()
                .filter(|s| s.is_keystep && s.instruction.contains("pose_dict['pose"))
                .filter(|s| s.instruction.contains("] = "))
                .count();
            assert_eq!(assignments, 3);
        }
    }

    #[test]
    fn dataset_roundtrips_through_file() {
        let ds = generate_dataset(TaskKind::Pick, 2, 12000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pick.jsonl");
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(ds, back);
    }
}
