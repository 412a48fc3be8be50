//! The robot-API code DSL: parser, printer, key-step semantics, memory
//! buffer, and cache extraction.

pub mod ast;
pub mod memory;
pub mod parser;
pub mod trace;
pub mod vocab;

pub use ast::{ActorRef, Assign, AssignRhs, Command, EePoseExpr, Instruction, PoseExpr, TemplateId};
pub use memory::{extract_memory_info, update_memory, CacheInfo, MemoryBuffer, NULL_CACHE};
pub use parser::{parse, ParseError};
pub use trace::{is_keystep, prefix_early_stop, preprocess_trace, CodeTrace, TraceError, EARLY_STOP_PREFIX};
