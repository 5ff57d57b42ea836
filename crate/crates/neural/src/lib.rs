//! Minimal reverse-mode automatic differentiation and the network pieces
//! built on it: dense layers, an LSTM cell, a (masked) bidirectional scan,
//! Adam and a JSON checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use layers::{
    bidirectional_scan, masked_bidirectional_scan, Dense, LstmCell, LstmState, Mlp, Participation,
};
pub use params::{BoundParams, ParamId, ParamSet};
pub use tape::{log_sum_exp, rect_union_margin, sigmoid, Gradients, Rect2, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bidirectional scan over an empty sequence")]
    EmptySequence,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
