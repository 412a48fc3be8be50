//! Hierarchical runtime: rollout modes and seeded evaluation.

pub mod eval;
pub mod rollout;

pub use eval::{evaluate, evaluate_task, mean_of, TaskEval, EVAL_RUNS, EVAL_SEED_COUNT, EVAL_SEED_START};
pub use rollout::{rollout, Mode, RolloutConfig, RolloutResult, Sampler, TraceRow};
