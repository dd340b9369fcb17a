use std::collections::BTreeMap;

use super::Hyperparams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// First and second moment estimates for one weight block.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One bias-corrected Adam update of `param` at step `t` (1-based). Moments
/// and the update are carried in f64.
pub fn adam_step(param: &mut Tensor<f32>, grad: &Tensor<f32>, state: &mut Moments, hp: &Hyperparams, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step count starts at 1".into()));
    }
    if param.shape() != grad.shape() || state.m.len() != param.len() {
        return Err(Error::Shape(format!(
            "adam: param {:?}, grad {:?}, state {}",
            param.shape(),
            grad.shape(),
            state.m.len()
        )));
    }
    let (b1, b2) = (hp.beta1, hp.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(&mut state.m).zip(&mut state.v) {
        let g = g as f64;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let step = hp.learning_rate * (*m / c1) / ((*v / c2).sqrt() + hp.epsilon);
        *p = (*p as f64 - step) as f32;
    }
    Ok(())
}

/// Adam over named weight blocks; moments are created on first use.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    t: u64,
    moments: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to every block named in `grads`.
    pub fn step(&mut self, weights: &mut BTreeMap<String, Tensor<f32>>, grads: &BTreeMap<String, Tensor<f32>>, hp: &Hyperparams) -> Result<()> {
        self.t += 1;
        for (name, g) in grads {
            let p = weights
                .get_mut(name)
                .ok_or_else(|| Error::Shape(format!("adam: no weight block {name}")))?;
            let state = self.moments.entry(name.clone()).or_insert_with(|| Moments::zeros(p.len()));
            adam_step(p, g, state, hp, self.t)?;
        }
        Ok(())
    }
}
