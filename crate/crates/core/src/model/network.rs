use std::collections::{BTreeMap, HashSet};

use super::spec::{param_name, Activation, BiOutput, Head, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{Float, LstmParams, Mode, RngStream, Tape, Tensor, Var};
use crate::text::{Alphabet, EncodedDocument, EncodedSentence, ALPHABET_SIZE};

/// Named weight blocks in name order.
pub type Weights<T = f32> = BTreeMap<String, Tensor<T>>;

/// Weight blocks bound to tape variables.
pub type Bound = BTreeMap<String, Var>;

/// Encoder and classifier weights with their spec, label vocabulary and
/// input alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub weights: Weights,
    /// Class names by output index; empty right after a head replacement.
    pub labels: Vec<String>,
    pub alphabet: Alphabet,
}

/// Tape outputs of a forward pass over a batch of documents.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `[docs × n_classes]`.
    pub probs: Var,
    /// Penultimate classifier activation, `[docs × feature_dim]`.
    pub features: Var,
}

/// Fan-in scaled uniform for conv kernels and dense weights, zero biases,
/// `U(±1/√H)` for LSTM matrices with forget-gate bias +1.
pub fn init_block(name: &str, shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = RngStream::keyed(seed, name);
    let n: usize = shape.iter().product();
    let leaf = name.rsplit('.').next().unwrap_or("");
    let lstm = name.contains(".bilstm.");
    let data: Vec<f32> = if lstm && leaf == "bias" {
        let h = n / 4;
        (0..n).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect()
    } else if lstm {
        let h = shape[1] / 4;
        let limit = 1.0 / (h as f64).sqrt();
        (0..n).map(|_| rng.uniform_range(-limit, limit) as f32).collect()
    } else if leaf == "bias" {
        vec![0.0; n]
    } else {
        let fan_in: usize = shape[..shape.len() - 1].iter().product();
        let limit = (6.0 / fan_in as f64).sqrt();
        (0..n).map(|_| rng.uniform_range(-limit, limit) as f32).collect()
    };
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

impl Model {
    /// Fresh weights for `spec`, each block seeded by `seed` and its name.
    pub fn new(spec: ModelSpec, labels: Vec<String>, seed: u64) -> Result<Self> {
        let weights = spec
            .param_shapes()?
            .into_iter()
            .map(|(name, shape)| {
                let t = init_block(&name, &shape, seed);
                (name, t)
            })
            .collect();
        let model = Self { spec, weights, labels, alphabet: Alphabet::canonical() };
        model.check()?;
        Ok(model)
    }

    /// Verifies weights against the spec and the label vocabulary.
    pub fn check(&self) -> Result<()> {
        let shapes = self.spec.param_shapes()?;
        if shapes.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "spec has {} weight blocks, model has {}",
                shapes.len(),
                self.weights.len()
            )));
        }
        for (name, shape) in &shapes {
            match self.weights.get(name) {
                Some(t) if t.shape() == &shape[..] => {}
                Some(t) => return Err(Error::Shape(format!("{name}: {:?}, spec wants {shape:?}", t.shape()))),
                None => return Err(Error::Shape(format!("missing weight block {name}"))),
            }
        }
        if !self.labels.is_empty() && self.labels.len() != self.spec.n_classes {
            return Err(Error::Shape(format!(
                "{} labels for {} classes",
                self.labels.len(),
                self.spec.n_classes
            )));
        }
        let distinct: HashSet<&String> = self.labels.iter().collect();
        if distinct.len() != self.labels.len() {
            return Err(Error::InvalidArgument("duplicate label names".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn head(&self) -> Head {
        self.spec.head()
    }

    pub fn param_count(&self) -> usize {
        self.weights.values().map(Tensor::len).sum()
    }

    /// Puts every block on `tape`: blocks for which `trainable` holds become
    /// parameters, the rest constants.
    pub fn bind<T: Float>(&self, tape: &mut Tape<T>, trainable: impl Fn(&str) -> bool) -> Bound {
        bind_weights(&self.weights, tape, trainable)
    }

    /// Per-document class probabilities and penultimate features, in batches
    /// of `batch` documents. In train mode dropout draws from `rng`.
    pub fn run(&self, docs: &[EncodedDocument], mode: Mode, rng: &mut RngStream, batch: usize) -> Result<Vec<Output>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(batch.max(1)) {
            let refs: Vec<&EncodedDocument> = chunk.iter().collect();
            let mut tape = Tape::<f32>::new();
            let bound = self.bind(&mut tape, |_| false);
            let fwd = forward(&self.spec, &mut tape, &bound, &refs, mode, rng)?;
            let n = self.spec.n_classes;
            let f = self.spec.feature_dim;
            let probs = tape.value(fwd.probs).data();
            let feats = tape.value(fwd.features).data();
            for i in 0..chunk.len() {
                out.push(Output {
                    probs: probs[i * n..(i + 1) * n].to_vec(),
                    features: feats[i * f..(i + 1) * f].to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Eval-mode probabilities for each document.
    pub fn predict(&self, docs: &[EncodedDocument]) -> Result<Vec<Vec<f32>>> {
        Ok(self.run(docs, Mode::Eval, &mut RngStream::new(0), 16)?.into_iter().map(|o| o.probs).collect())
    }

    /// Eval-mode penultimate features for each document.
    pub fn features(&self, docs: &[EncodedDocument]) -> Result<Vec<Vec<f32>>> {
        Ok(self.run(docs, Mode::Eval, &mut RngStream::new(0), 16)?.into_iter().map(|o| o.features).collect())
    }

    /// Class probabilities for one document. Train mode applies dropout with
    /// masks from a fixed stream.
    pub fn classify_document(&self, d: &EncodedDocument, mode: Mode) -> Result<Vec<f32>> {
        let mut rng = RngStream::keyed(0, "classify_document");
        Ok(self.run(std::slice::from_ref(d), mode, &mut rng, 1)?.remove(0).probs)
    }

    /// The penultimate (feature) layer activation in eval mode.
    pub fn document_features(&self, d: &EncodedDocument) -> Result<Vec<f32>> {
        Ok(self.run(std::slice::from_ref(d), Mode::Eval, &mut RngStream::new(0), 1)?.remove(0).features)
    }

    /// Encoder output for a single sentence in eval mode.
    pub fn encode_sentence_features(&self, s: &EncodedSentence) -> Result<Vec<f32>> {
        if s.max_chars() != self.spec.encoding.max_chars {
            return Err(Error::Shape(format!(
                "sentence has {} rows, model expects {}",
                s.max_chars(),
                self.spec.encoding.max_chars
            )));
        }
        let mut tape = Tape::<f32>::new();
        let bound = self.bind(&mut tape, |_| false);
        let x = tape.constant(sentence_batch(&[s]));
        let y = run_stack(&mut tape, "encoder", &self.spec.encoder, &bound, x, Mode::Eval, &mut RngStream::new(0))?;
        Ok(tape.value(y).data().to_vec())
    }
}

/// Result of [`Model::run`] for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub probs: Vec<f32>,
    pub features: Vec<f32>,
}

pub fn bind_weights<T: Float>(weights: &Weights, tape: &mut Tape<T>, trainable: impl Fn(&str) -> bool) -> Bound {
    weights
        .iter()
        .map(|(name, t)| {
            let t = t.cast::<T>();
            let v = if trainable(name) { tape.param(t) } else { tape.constant(t) };
            (name.clone(), v)
        })
        .collect()
}

fn sentence_batch<T: Float>(sentences: &[&EncodedSentence]) -> Tensor<T> {
    let c = sentences[0].max_chars();
    let stride = c * ALPHABET_SIZE;
    let mut data = vec![T::zero(); sentences.len() * stride];
    for (i, s) in sentences.iter().enumerate() {
        s.write_one_hot(&mut data[i * stride..(i + 1) * stride]);
    }
    Tensor::new(vec![sentences.len(), c, ALPHABET_SIZE], data).expect("sentence batch shape")
}

/// Full forward pass over `docs`. Non-blank sentences go through the encoder
/// as one batch; all blank sentences share a single encoder row.
pub fn forward<T: Float>(
    spec: &ModelSpec,
    tape: &mut Tape<T>,
    params: &Bound,
    docs: &[&EncodedDocument],
    mode: Mode,
    rng: &mut RngStream,
) -> Result<Forward> {
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = docs.iter().find(|d| !d.matches(&spec.encoding)) {
        return Err(Error::Shape(format!(
            "document is {}×{}, model expects {}×{}",
            bad.max_sentences(),
            bad.max_chars(),
            spec.encoding.max_sentences,
            spec.encoding.max_chars
        )));
    }
    let mut unique: Vec<&EncodedSentence> = Vec::new();
    let mut blank_row = None;
    let mut rows = Vec::with_capacity(docs.len() * spec.encoding.max_sentences);
    for d in docs {
        for s in &d.sentences {
            let row = if s.is_blank() {
                *blank_row.get_or_insert_with(|| {
                    unique.push(s);
                    unique.len() - 1
                })
            } else {
                unique.push(s);
                unique.len() - 1
            };
            rows.push(row);
        }
    }
    let x = tape.constant(sentence_batch(&unique));
    let encoded = run_stack(tape, "encoder", &spec.encoder, params, x, mode, rng)?;
    let gathered = tape.gather_rows(encoded, &rows)?;
    let grid = tape.reshape(gathered, vec![docs.len(), spec.encoding.max_sentences, spec.sentence_dim])?;
    let n = spec.classifier.len();
    let features = run_stack(tape, "classifier", &spec.classifier[..n - 1], params, grid, mode, rng)?;
    let probs = apply_layer(tape, "classifier", n - 1, &spec.classifier[n - 1], params, features, mode, rng)?;
    Ok(Forward { probs, features })
}

/// Applies `layers` of `section` in order.
pub fn run_stack<T: Float>(
    tape: &mut Tape<T>,
    section: &str,
    layers: &[LayerSpec],
    params: &Bound,
    mut x: Var,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<Var> {
    for (i, layer) in layers.iter().enumerate() {
        x = apply_layer(tape, section, i, layer, params, x, mode, rng)?;
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn apply_layer<T: Float>(
    tape: &mut Tape<T>,
    section: &str,
    index: usize,
    layer: &LayerSpec,
    params: &Bound,
    x: Var,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<Var> {
    let p = |leaf: &str| -> Result<Var> {
        let name = param_name(section, index, layer.kind(), leaf);
        params.get(&name).copied().ok_or_else(|| Error::Shape(format!("missing weight block {name}")))
    };
    match *layer {
        LayerSpec::Conv1d { stride, pad, .. } => {
            let y = tape.conv1d(x, p("kernel")?, stride, pad)?;
            tape.add_bias(y, p("bias")?)
        }
        LayerSpec::Maxpool1d { window, stride } => tape.maxpool1d(x, window, stride),
        LayerSpec::Dropout { rate } => tape.dropout(x, rate, mode, rng),
        LayerSpec::Bilstm { output, .. } => {
            let dir = |d: &str| -> Result<LstmParams> {
                Ok(LstmParams {
                    input: p(&format!("{d}.input"))?,
                    recurrent: p(&format!("{d}.recurrent"))?,
                    bias: p(&format!("{d}.bias"))?,
                })
            };
            let seq = tape.bilstm(x, dir("fwd")?, dir("bwd")?)?;
            match output {
                BiOutput::Sequence => Ok(seq),
                BiOutput::LastStep => tape.last_step(seq),
            }
        }
        LayerSpec::Dense { activation, .. } => {
            let y = tape.dense(x, p("weight")?, p("bias")?)?;
            Ok(activate(tape, y, activation))
        }
        LayerSpec::Activation { function } => Ok(activate(tape, x, function)),
        LayerSpec::Readout => tape.last_step(x),
    }
}

fn activate<T: Float>(tape: &mut Tape<T>, x: Var, f: Activation) -> Var {
    match f {
        Activation::Identity => x,
        Activation::Relu => tape.relu(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Softmax => tape.softmax(x),
    }
}
