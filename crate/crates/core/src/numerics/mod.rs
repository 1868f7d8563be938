//! Dense tensors, reverse-mode differentiation, recurrent cells and optimization.

pub mod checkpoint;
pub mod dropout;
pub mod gradcheck;
pub mod gru;
pub mod lattice;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use dropout::Dropout;
pub use gru::{BiGru, GruCell};
pub use lattice::ChainConstraints;
pub use optim::{clip_grad_norm, AdamW, LinearSchedule};
pub use params::{ParamId, ParamStore, Parameter, INIT_STD};
pub use tape::{masked_softmax, NodeId, Tape};
pub use tensor::Tensor;
