//! Minimal tensor / reverse-mode autodiff / layer / optimizer substrate.
//!
//! Everything runs in f32; the generic graph also instantiates with f64 so
//! test oracles can finite-difference the exact same op implementations.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use checkpoint::{load_params, save_params, CheckpointError};
pub use graph::{Graph, GraphT, NnError, NodeId};
pub use layers::{
    padding_mask, timestep_embedding, Conv1d, Conv2d, CrossAttentionBlock, Embedding, LayerNorm,
    Linear,
};
pub use optim::{AdamConfig, ParamId, ParamSet, ParamView, Parameter};
pub use tensor::{Scalar, Tensor, TensorT};
