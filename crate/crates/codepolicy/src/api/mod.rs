//! The robot API: pose utilities, actor lookup, solver policies, and the
//! instruction executor used by both the oracle and planner-driven control.

pub mod exec;
pub mod poses;
pub mod query;
pub mod solver;

pub use exec::{begin_instruction, ExecError, PoseDict};
pub use poses::{
    free_space, free_space_next_to, pose_on_top, pre_pick_ee_pose, pre_place_ee_pose,
    pre_push_pose, push_direction, towards_pose, PoseError, HOVER,
};
pub use query::{description_similarity, get_actor, QueryError};
pub use solver::{Solver, SolverKind, SAFE_Z};
