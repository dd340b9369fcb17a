//! Mini-batch Adam training, losses, evaluation metrics and reports.

mod adam;
mod metrics;
pub mod report;
mod train;

pub use adam::{adam_step, Adam, Moments};
pub use metrics::{compute_metrics, f1, ratio, roc_auc, ClassCounts, Metrics};
pub use train::{
    align_labels, batch_gradients, encode_set, evaluate, loss_and_accuracy, predict_all, predict_features, train, train_masked,
    EncodedSet, EpochRecord, Hyperparams, TrainableMask, TrainingHistory,
};

use crate::error::{Error, Result};
use crate::model::{head_loss, Head};
use crate::tensor::{Tape, Tensor};

/// Loss of one probability vector against its targets: mean per-class
/// binary cross-entropy for a sigmoid head, categorical cross-entropy for a
/// softmax head. Probabilities are clamped to `[1e-7, 1 − 1e-7]`.
pub fn loss(probs: &[f64], targets: &[f64], head: Head) -> Result<f64> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::Shape(format!("{} probabilities for {} targets", probs.len(), targets.len())));
    }
    let mut tape = Tape::<f64>::new();
    let p = tape.constant(Tensor::new(vec![1, probs.len()], probs.to_vec())?);
    let t = tape.constant(Tensor::new(vec![1, targets.len()], targets.to_vec())?);
    let l = head_loss(&mut tape, p, t, head)?;
    Ok(tape.value(l).data()[0])
}
