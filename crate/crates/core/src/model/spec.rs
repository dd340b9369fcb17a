use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::window_len;
use crate::text::{EncodingConfig, ALPHABET_SIZE};

pub const ENCODER_LAYERS: usize = 13;
pub const CLASSIFIER_LAYERS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

/// Output activation of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Independent per-class probabilities (multi-label).
    #[default]
    Sigmoid,
    /// Mutually exclusive classes.
    Softmax,
}

impl Head {
    pub fn activation(self) -> Activation {
        match self {
            Head::Sigmoid => Activation::Sigmoid,
            Head::Softmax => Activation::Softmax,
        }
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Head::Sigmoid),
            "softmax" => Ok(Head::Softmax),
            _ => Err(Error::InvalidArgument(format!("unknown head {s:?} (sigmoid|softmax)"))),
        }
    }
}

/// What a bidirectional LSTM layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiOutput {
    /// Every step, `[T × 2H]`.
    Sequence,
    /// Forward final state joined with backward final state, `[2H]`.
    LastStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, width: usize, stride: usize, pad: usize },
    Maxpool1d { window: usize, stride: usize },
    Dropout { rate: f64 },
    Bilstm { hidden: usize, output: BiOutput },
    Dense { units: usize, activation: Activation },
    Activation { function: Activation },
    /// Last-timestep read of a bidirectional sequence.
    Readout,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Bilstm { .. } => "bilstm",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Readout => "readout",
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv1d { filters, width, stride, .. } => filters > 0 && width > 0 && stride > 0,
            LayerSpec::Maxpool1d { window, stride } => window > 0 && stride > 0,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::Bilstm { hidden, .. } => hidden > 0,
            LayerSpec::Dense { units, .. } => units > 0,
            LayerSpec::Activation { .. } | LayerSpec::Readout => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid hyperparameters for {self:?}")))
        }
    }
}

/// Shape of the activation flowing between layers, per example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Seq { len: usize, channels: usize },
    Vector(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoding: EncodingConfig,
    pub sentence_dim: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub encoder: Vec<LayerSpec>,
    pub classifier: Vec<LayerSpec>,
}

/// Weight block name, e.g. `encoder.00.conv1d.kernel`.
pub fn param_name(section: &str, index: usize, kind: &str, leaf: &str) -> String {
    format!("{section}.{index:02}.{kind}.{leaf}")
}

fn scaled(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).ceil() as usize).max(1)
}

/// The default 13-layer encoder and 7-layer classifier with widths
/// multiplied by `scale` (rounded up, at least 1).
pub fn build_default_spec(n_classes: usize, encoding: EncodingConfig, scale: f64) -> Result<ModelSpec> {
    build_spec(n_classes, encoding, scale, Head::default())
}

pub fn build_spec(n_classes: usize, encoding: EncodingConfig, scale: f64, head: Head) -> Result<ModelSpec> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale {scale} not in (0, 1]")));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!("n_classes {n_classes} < 2")));
    }
    let w = |x| scaled(x, scale);
    let conv = |filters, width| LayerSpec::Conv1d { filters, width, stride: 1, pad: 0 };
    let relu = LayerSpec::Activation { function: Activation::Relu };
    let pool = LayerSpec::Maxpool1d { window: 2, stride: 2 };
    let drop = LayerSpec::Dropout { rate: 0.1 };
    let enc_hidden = w(256);
    let encoder = vec![
        conv(w(64), 5),
        relu,
        pool,
        drop,
        conv(w(128), 5),
        relu,
        pool,
        drop,
        conv(w(256), 3),
        relu,
        LayerSpec::Bilstm { hidden: enc_hidden, output: BiOutput::Sequence },
        drop,
        LayerSpec::Readout,
    ];
    let feature_dim = w(128);
    let classifier = vec![
        conv(w(128), 3),
        pool,
        drop,
        LayerSpec::Bilstm { hidden: w(64), output: BiOutput::LastStep },
        drop,
        LayerSpec::Dense { units: feature_dim, activation: Activation::Relu },
        LayerSpec::Dense { units: n_classes, activation: head.activation() },
    ];
    let spec = ModelSpec {
        encoding,
        sentence_dim: 2 * enc_hidden,
        feature_dim,
        n_classes,
        encoder,
        classifier,
    };
    spec.validate()?;
    Ok(spec)
}

impl ModelSpec {
    pub fn head(&self) -> Head {
        match self.classifier.last() {
            Some(LayerSpec::Dense { activation: Activation::Softmax, .. }) => Head::Softmax,
            _ => Head::Sigmoid,
        }
    }

    /// Checks layer counts, hyperparameters and the shape flow through both
    /// stacks.
    pub fn validate(&self) -> Result<()> {
        self.param_shapes().map(|_| ())
    }

    /// Every weight block in forward order with its shape; validates the
    /// spec on the way.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        if self.encoder.len() != ENCODER_LAYERS || self.classifier.len() != CLASSIFIER_LAYERS {
            return Err(Error::InvalidArgument(format!(
                "layer counts {}/{} (expected {ENCODER_LAYERS}/{CLASSIFIER_LAYERS})",
                self.encoder.len(),
                self.classifier.len()
            )));
        }
        let mut shapes = Vec::new();
        let enc_in = Flow::Seq { len: self.encoding.max_chars, channels: ALPHABET_SIZE };
        let flows = infer("encoder", &self.encoder, enc_in, &mut shapes)?;
        if flows.last() != Some(&Flow::Vector(self.sentence_dim)) {
            return Err(Error::InvalidArgument(format!(
                "encoder ends in {:?}, expected a {}-vector",
                flows.last(),
                self.sentence_dim
            )));
        }
        let cls_in = Flow::Seq { len: self.encoding.max_sentences, channels: self.sentence_dim };
        let flows = infer("classifier", &self.classifier, cls_in, &mut shapes)?;
        if flows[flows.len() - 2] != Flow::Vector(self.feature_dim) {
            return Err(Error::InvalidArgument(format!(
                "classifier penultimate output {:?}, expected a {}-vector",
                flows[flows.len() - 2],
                self.feature_dim
            )));
        }
        match self.classifier.last() {
            Some(LayerSpec::Dense { units, activation: Activation::Sigmoid | Activation::Softmax })
                if *units == self.n_classes => {}
            last => {
                return Err(Error::InvalidArgument(format!(
                    "classifier must end in dense({}) with sigmoid or softmax, got {last:?}",
                    self.n_classes
                )))
            }
        }
        Ok(shapes)
    }

    /// Per-layer output flow of the encoder, one entry per layer.
    pub fn encoder_flow(&self) -> Result<Vec<Flow>> {
        let enc_in = Flow::Seq { len: self.encoding.max_chars, channels: ALPHABET_SIZE };
        infer("encoder", &self.encoder, enc_in, &mut Vec::new())
    }

    pub fn classifier_flow(&self) -> Result<Vec<Flow>> {
        let cls_in = Flow::Seq { len: self.encoding.max_sentences, channels: self.sentence_dim };
        infer("classifier", &self.classifier, cls_in, &mut Vec::new())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Corrupted(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn infer(section: &str, layers: &[LayerSpec], input: Flow, shapes: &mut Vec<(String, Vec<usize>)>) -> Result<Vec<Flow>> {
    let mut flow = input;
    let mut flows = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        layer.check()?;
        let name = |leaf: &str| param_name(section, i, layer.kind(), leaf);
        let bad = |flow: Flow| Error::InvalidArgument(format!("{section} layer {i} ({}) cannot take {flow:?}", layer.kind()));
        flow = match (*layer, flow) {
            (LayerSpec::Conv1d { filters, width, stride, pad }, Flow::Seq { len, channels }) => {
                let len = window_len(len, width, stride, pad).ok_or_else(|| bad(flow))?;
                shapes.push((name("kernel"), vec![width, channels, filters]));
                shapes.push((name("bias"), vec![filters]));
                Flow::Seq { len, channels: filters }
            }
            (LayerSpec::Maxpool1d { window, stride }, Flow::Seq { len, channels }) => {
                let len = window_len(len, window, stride, 0).ok_or_else(|| bad(flow))?;
                Flow::Seq { len, channels }
            }
            (LayerSpec::Bilstm { hidden, output }, Flow::Seq { len, channels }) => {
                for dir in ["fwd", "bwd"] {
                    shapes.push((name(&format!("{dir}.input")), vec![channels, 4 * hidden]));
                    shapes.push((name(&format!("{dir}.recurrent")), vec![hidden, 4 * hidden]));
                    shapes.push((name(&format!("{dir}.bias")), vec![4 * hidden]));
                }
                match output {
                    BiOutput::Sequence => Flow::Seq { len, channels: 2 * hidden },
                    BiOutput::LastStep => Flow::Vector(2 * hidden),
                }
            }
            (LayerSpec::Readout, Flow::Seq { channels, .. }) if channels % 2 == 0 => Flow::Vector(channels),
            (LayerSpec::Dense { units, .. }, Flow::Vector(d)) => {
                shapes.push((name("weight"), vec![d, units]));
                shapes.push((name("bias"), vec![units]));
                Flow::Vector(units)
            }
            (LayerSpec::Dropout { .. } | LayerSpec::Activation { .. }, f) => f,
            (_, f) => return Err(bad(f)),
        };
        flows.push(flow);
    }
    Ok(flows)
}
