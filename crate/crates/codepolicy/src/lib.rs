//! Hierarchical imitation on a toy tabletop.
//!
//! Scripted solvers drive a deterministic 2.5D simulator and emit the robot
//! API call they are executing as a code trace. A structured planner learns
//! to reproduce the code; a code-conditioned diffusion policy learns the
//! low-level actions; a runtime composes the two with a memory buffer and
//! action-chunk regeneration, and evaluates hierarchical against flat
//! variants.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod api;
pub mod diffusion;
pub mod dsl;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod runtime;
pub mod sim;
