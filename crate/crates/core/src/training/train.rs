use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::metrics::{compute_metrics, Metrics};
use crate::error::{Error, Result};
use crate::model::{forward, head_loss, Head, Model};
use crate::tensor::{Mode, RngStream, Tape, Tensor};
use crate::text::{encode_document, EncodedDocument, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    /// Stop after this many epochs without a lower validation loss and
    /// restore the best weights.
    pub early_stop_patience: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            head: Head::Sigmoid,
            early_stop_patience: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("hyperparameter {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == Some(0) {
            return bad("early_stop_patience must be at least 1");
        }
        Ok(())
    }
}

/// Weight blocks excluded from updates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainableMask {
    frozen: BTreeSet<String>,
}

impl TrainableMask {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn freezing(names: impl IntoIterator<Item = String>) -> Self {
        Self { frozen: names.into_iter().collect() }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        !self.frozen.contains(name)
    }

    pub fn frozen(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    /// Scalar count of weights the mask leaves trainable in `model`.
    pub fn trainable_params(&self, model: &Model) -> usize {
        model.weights.iter().filter(|(n, _)| self.is_trainable(n)).map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights the model holds after early stopping.
    pub restored_epoch: Option<usize>,
}

impl TrainingHistory {
    /// First epoch (1-based) whose training accuracy reaches `target`.
    pub fn epochs_to_accuracy(&self, target: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.train_accuracy >= target).map(|e| e.epoch)
    }
}

/// Documents encoded for a model with 0/1 target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub docs: Vec<EncodedDocument>,
    pub targets: Vec<Vec<bool>>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> (Vec<&EncodedDocument>, Vec<&[bool]>) {
        (idx.iter().map(|&i| &self.docs[i]).collect(), idx.iter().map(|&i| &self.targets[i][..]).collect())
    }
}

/// Expresses `d` in the model's label ids. A model without label names
/// adopts the dataset vocabulary when its size equals `n_classes`.
pub fn align_labels(model: &mut Model, d: &LabeledDataset) -> Result<LabeledDataset> {
    if model.labels.is_empty() {
        if d.label_vocab.len() == model.n_classes() {
            model.labels = d.label_vocab.clone();
        }
        return Ok(d.clone());
    }
    d.align_to(&model.labels)
}

/// Encodes `d` (already in model label ids) for `model`.
pub fn encode_set(model: &Model, d: &LabeledDataset) -> Result<EncodedSet> {
    let n = model.n_classes();
    let head = model.head();
    let mut docs = Vec::with_capacity(d.len());
    let mut targets = Vec::with_capacity(d.len());
    for r in &d.records {
        if let Some(&id) = r.labels.iter().find(|&&l| l >= n) {
            return Err(Error::LabelOutOfRange { id, n_classes: n });
        }
        if head == Head::Softmax && r.labels.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "softmax head needs exactly one label per record, got {}",
                r.labels.len()
            )));
        }
        let mut row = vec![false; n];
        r.labels.iter().for_each(|&l| row[l] = true);
        docs.push(encode_document(&r.text, &model.alphabet, &model.spec.encoding));
        targets.push(row);
    }
    Ok(EncodedSet { docs, targets })
}

fn target_tensor(rows: &[&[bool]]) -> Tensor<f32> {
    let n = rows[0].len();
    let data = rows.iter().flat_map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 })).collect();
    Tensor::new(vec![rows.len(), n], data).expect("target shape")
}

/// Loss and gradients of the trainable blocks on one batch.
pub fn batch_gradients(
    model: &Model,
    mask: &TrainableMask,
    docs: &[&EncodedDocument],
    targets: &[&[bool]],
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(f64, BTreeMap<String, Tensor<f32>>)> {
    let mut tape = Tape::<f32>::new();
    let bound = model.bind(&mut tape, |n| mask.is_trainable(n));
    let out = forward(&model.spec, &mut tape, &bound, docs, mode, rng)?;
    let t = tape.constant(target_tensor(targets));
    let loss = head_loss(&mut tape, out.probs, t, model.head())?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value}")));
    }
    let mut grads = tape.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, &v) in &bound {
        if mask.is_trainable(name) {
            let g = grads.take(v);
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
            out.insert(name.clone(), g);
        }
    }
    Ok((value, out))
}

/// Eval-mode probabilities for every document, batches fanned out over the
/// rayon pool and collected in input order.
pub fn predict_all(model: &Model, docs: &[EncodedDocument], batch: usize) -> Result<Vec<Vec<f32>>> {
    let chunks: Vec<Vec<Vec<f32>>> = docs.par_chunks(batch.max(1)).map(|c| model.predict(c)).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Eval-mode penultimate features, fanned out like [`predict_all`].
pub fn predict_features(model: &Model, docs: &[EncodedDocument]) -> Result<Vec<Vec<f32>>> {
    let chunks: Vec<Vec<Vec<f32>>> = docs.par_chunks(32).map(|c| model.features(c)).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Mean eval-mode loss over the set and the binary accuracy at 0.5.
pub fn loss_and_accuracy(model: &Model, set: &EncodedSet, batch: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let probs = predict_all(model, &set.docs, batch)?;
    let mut total = 0.0;
    for (chunk_p, chunk_t) in probs.chunks(batch.max(1)).zip(set.targets.chunks(batch.max(1))) {
        let mut tape = Tape::<f32>::new();
        let n = chunk_p[0].len();
        let p = tape.constant(Tensor::new(vec![chunk_p.len(), n], chunk_p.concat()).expect("prob shape"));
        let rows: Vec<&[bool]> = chunk_t.iter().map(|r| &r[..]).collect();
        let t = tape.constant(target_tensor(&rows));
        let l = head_loss(&mut tape, p, t, model.head())?;
        total += tape.value(l).data()[0] as f64 * chunk_p.len() as f64;
    }
    let loss = total / set.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    let m = compute_metrics(&probs, &set.targets, &model.labels, 0.5)?;
    Ok((loss, m.binary_accuracy))
}

/// Trains every weight block. See [`train_masked`].
pub fn train(model: &mut Model, train_set: &LabeledDataset, val_set: Option<&LabeledDataset>, hp: &Hyperparams) -> Result<TrainingHistory> {
    train_masked(model, &TrainableMask::all(), train_set, val_set, hp)
}

/// Mini-batch Adam on the blocks `mask` leaves trainable. The order of
/// training documents is reshuffled every epoch from `hp.seed`; dropout
/// masks come from a stream keyed by (seed, epoch, batch). History records
/// eval-mode loss and binary accuracy after each epoch.
pub fn train_masked(
    model: &mut Model,
    mask: &TrainableMask,
    train_set: &LabeledDataset,
    val_set: Option<&LabeledDataset>,
    hp: &Hyperparams,
) -> Result<TrainingHistory> {
    hp.validate()?;
    if hp.head != model.head() {
        return Err(Error::InvalidArgument(format!(
            "hyperparameters ask for a {:?} head, model has {:?}",
            hp.head,
            model.head()
        )));
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train_ids = align_labels(model, train_set)?;
    let train_enc = encode_set(model, &train_ids)?;
    let val_enc = match val_set {
        Some(v) if !v.is_empty() => {
            let ids = align_labels(model, v)?;
            Some(encode_set(model, &ids)?)
        }
        _ => None,
    };
    let mut history = TrainingHistory::default();
    let mut adam = Adam::new();
    let mut order_rng = RngStream::keyed(hp.seed, "train.shuffle");
    let mut best: Option<(f64, usize, crate::model::Weights)> = None;
    for epoch in 1..=hp.epochs {
        let mut order: Vec<usize> = (0..train_enc.len()).collect();
        order_rng.shuffle(&mut order);
        for (b, idx) in order.chunks(hp.batch_size).enumerate() {
            let (docs, targets) = train_enc.subset(idx);
            let mut rng = RngStream::indexed(hp.seed, epoch as u64, b as u64);
            let (_, grads) = batch_gradients(model, mask, &docs, &targets, Mode::Train, &mut rng)?;
            adam.step(&mut model.weights, &grads, hp)?;
        }
        let (train_loss, train_accuracy) = loss_and_accuracy(model, &train_enc, hp.batch_size)?;
        let val = val_enc.as_ref().map(|v| loss_and_accuracy(model, v, hp.batch_size)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss: val.map(|v| v.0),
            val_accuracy: val.map(|v| v.1),
        });
        if let (Some(patience), Some((val_loss, _))) = (hp.early_stop_patience, val) {
            match &best {
                Some((b, _, _)) if val_loss >= *b => {}
                _ => best = Some((val_loss, epoch, model.weights.clone())),
            }
            let (_, best_epoch, _) = best.as_ref().expect("best recorded");
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }
    if let Some((_, epoch, weights)) = best {
        if history.epochs.last().map(|e| e.epoch) != Some(epoch) {
            model.weights = weights;
            history.restored_epoch = Some(epoch);
        }
    }
    Ok(history)
}

/// Metrics for `model` on `d` at `threshold`. Dataset labels are matched to
/// the model's label names when it has them, otherwise ids are used as is.
pub fn evaluate(model: &Model, d: &LabeledDataset, threshold: f64) -> Result<Metrics> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let aligned = if model.labels.is_empty() { d.clone() } else { d.align_to(&model.labels)? };
    let set = encode_set(model, &aligned)?;
    let probs = predict_all(model, &set.docs, 32)?;
    let labels = if model.labels.is_empty() { aligned.label_vocab.clone() } else { model.labels.clone() };
    compute_metrics(&probs, &set.targets, &labels, threshold)
}
