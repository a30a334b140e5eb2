//! Dense `f64` tensors, tape-based reverse-mode differentiation, AdamW and
//! the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use graph::{Grads, Graph, Var};
pub use optim::AdamW;
pub use params::{group_of, ParamId, ParamStore, Parameter};
pub use rng::SeedStream;
pub use tensor::{softmax, Tensor};
