use serde::{Deserialize, Serialize};

use super::array::{Float, Tensor};

/// Handle to a value recorded on a [`Tape`]. Ids increase in recording order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// The three weight blocks of one LSTM direction. Gate order inside the
/// `4H` axis is input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    /// `[I × 4H]`
    pub input: Var,
    /// `[H × 4H]`
    pub recurrent: Var,
    /// `[4H]`
    pub bias: Var,
}

pub(crate) enum Op<T> {
    Leaf,
    Dense { x: Var, w: Var, b: Var },
    Conv1d { x: Var, k: Var, stride: usize, pad: usize },
    AddBias { x: Var, b: Var },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Dropout { x: Var, mask: Vec<T> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Softmax { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
    Sum { x: Var },
    LstmStep {
        x: Var,
        state: Option<Var>,
        p: LstmParams,
        /// Activated gates `[B × 4H]`.
        gates: Vec<T>,
        /// `tanh(c')`, `[B × H]`.
        tanh_c: Vec<T>,
    },
    SliceLast { x: Var, start: usize },
    ConcatLast { a: Var, b: Var },
    SelectTime { x: Var, t: usize },
    StackTime { xs: Vec<Var> },
    LastStep { x: Var },
    GatherRows { x: Var, idx: Vec<usize> },
    Reshape { x: Var },
    Bce { p: Var, t: Var },
    Cce { p: Var, t: Var },
}

pub(crate) struct Node<T> {
    pub op: Op<T>,
    pub value: Tensor<T>,
    pub requires_grad: bool,
}

/// Append-only record of a forward computation. Each op stores what its
/// backward rule needs; [`Tape::backward`] walks the record in reverse.
pub struct Tape<T: Float = f32> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input; gradients flow to it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_node(Op::Leaf, value, true)
    }

    /// Input excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push_node(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, op: Op<T>, value: Tensor<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(op, value, rg)
    }
}
