//! The high-level planner: structured code generation from the base view,
//! the task prompt, and the key-step memory.

pub mod coding;
pub mod eval;
pub mod infer;
pub mod model;
pub mod train;

pub use coding::{CodeTargets, HeadChoices};
pub use eval::{keystep_sequence_match, location_accuracy, per_step_exact_match};
pub use infer::{predict_keystep, predict_location, predict_presence, predict_step};
pub use model::{PlannerInput, PlannerModel, PlannerQuery};
pub use train::{train_codegen, TrainConfig, TrainStats};
