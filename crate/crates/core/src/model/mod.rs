//! The sentence encoder and document classifier: specs, weights, forward
//! passes and checkpoints.

mod checkpoint;
pub mod gradcheck;
mod network;
mod spec;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, FORMAT_VERSION, MAGIC};
pub use network::{bind_weights, forward, init_block, run_stack, Bound, Forward, Model, Output, Weights};
pub use spec::{
    build_default_spec, build_spec, param_name, Activation, BiOutput, Flow, Head, LayerSpec, ModelSpec,
    CLASSIFIER_LAYERS, ENCODER_LAYERS,
};

use crate::error::Result;
use crate::tensor::{Float, Tape, Var};

/// Mean binary cross-entropy for a sigmoid head, mean categorical
/// cross-entropy for a softmax head.
pub fn head_loss<T: Float>(tape: &mut Tape<T>, probs: Var, targets: Var, head: Head) -> Result<Var> {
    match head {
        Head::Sigmoid => tape.bce(probs, targets),
        Head::Softmax => tape.cce(probs, targets),
    }
}
