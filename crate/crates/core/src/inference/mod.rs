//! Encrypted inference with a plaintext model: graph loading, the
//! executor, and the memory-footprint estimate.

mod exec;
pub mod fixtures;
mod footprint;
mod model;

pub use exec::{run_graph, ExecutionReport, FunctionRow, NodeRecord, PlainTensor, RunConfig, Value};
pub use footprint::{footprint_estimate, plan_levels, Footprint, LevelPlan};
pub use model::{
    load_model, ModelDoc, ModelGraph, Node, NodeDoc, OpSpec, Src, ValueKind, Weights, DEFAULT_RELU_BOUND, INPUT_NAME,
    MODEL_VERSION,
};
