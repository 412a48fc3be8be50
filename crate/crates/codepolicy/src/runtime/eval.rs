//! Seeded evaluation: success rates over 64 seeds with repeated runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::policy::DiffusionPolicy;
use crate::planner::model::PlannerModel;
use crate::sim::task::TaskKind;

use super::rollout::{rollout, RolloutConfig};

/// Evaluation seed range: 64 scenes.
pub const EVAL_SEED_START: u64 = 10;
pub const EVAL_SEED_COUNT: u64 = 64;
pub const EVAL_RUNS: u64 = 2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskEval {
    pub task: String,
    pub mode: String,
    /// Mean success (%) over per-run success rates.
    pub mean: f64,
    /// Standard deviation (%) over per-run success rates.
    pub std: f64,
    pub per_run: Vec<f64>,
}

/// Success rate per run (fraction of seeds solved), averaged across runs.
/// Rollouts parallelize over (seed, run); the per-run rngs derive from the
/// config, so the result is independent of scheduling.
pub fn evaluate_task(
    kind: TaskKind,
    planner: Option<&PlannerModel>,
    dp: Option<&DiffusionPolicy>,
    cfg: &RolloutConfig,
    seeds: std::ops::Range<u64>,
    runs: u64,
) -> TaskEval {
    let jobs: Vec<(u64, u64)> =
        (0..runs).flat_map(|r| seeds.clone().map(move |s| (s, r))).collect();
    let outcomes: Vec<(u64, u64, bool)> = jobs
        .par_iter()
        .map(|&(seed, run)| {
            let res = rollout(kind, seed, run, planner, dp, cfg);
            (seed, run, res.success)
        })
        .collect();
    let n_seeds = seeds.end - seeds.start;
    let mut per_run = vec![0f64; runs as usize];
    for (_, run, success) in &outcomes {
        if *success {
            per_run[*run as usize] += 1.0;
        }
    }
    for v in per_run.iter_mut() {
        *v = *v / n_seeds as f64 * 100.0;
    }
    let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
    let var =
        per_run.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per_run.len() as f64;
    TaskEval {
        task: kind.name().to_string(),
        mode: cfg.mode.name().to_string(),
        mean,
        std: var.sqrt(),
        per_run,
    }
}

/// Evaluate several tasks under one configuration.
pub fn evaluate(
    tasks: &[TaskKind],
    planner: Option<&PlannerModel>,
    dp: Option<&DiffusionPolicy>,
    cfg: &RolloutConfig,
) -> Vec<TaskEval> {
    tasks
        .iter()
        .map(|&kind| {
            evaluate_task(
                kind,
                planner,
                dp,
                cfg,
                EVAL_SEED_START..EVAL_SEED_START + EVAL_SEED_COUNT,
                EVAL_RUNS,
            )
        })
        .collect()
}

pub fn mean_of(evals: &[TaskEval]) -> f64 {
    evals.iter().map(|e| e.mean).sum::<f64>() / evals.len().max(1) as f64
}
