//! Minimal dense-tensor numerics with reverse-mode differentiation.

mod checkpoint;
mod gradcheck;
mod graph;
mod nn;
mod optim;
mod params;
mod posenc;
mod tensor;

#[cfg(test)]
mod tests;

pub use checkpoint::{
    checkpoint_paths, decode as decode_checkpoint, encode_blob, load as load_checkpoint,
    manifest_for, save as save_checkpoint, Manifest, ParamEntry,
};
pub use gradcheck::{check_params, relative_error, GradCheckEntry, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use nn::{
    attention, causal_mask, AttentionParams, Decoder, DecoderBlock, Encoder, EncoderBlock,
    FeedForward, LayerNorm, Linear,
};
pub use optim::Adam;
pub use params::{ParamGrads, ParamId, ParamStore};
pub use posenc::{cell_encoding, pos_encode_1d, pos_encode_2d, wavelength};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("attention row {row} has no unmasked key")]
    DegenerateAttention { row: usize },
    #[error("non-finite {what}")]
    NonFinite { what: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
