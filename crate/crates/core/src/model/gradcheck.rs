//! End-to-end gradient check of loss∘model.

use super::network::{forward, Model, Weights};
use super::{head_loss, Head, ModelSpec};
use crate::error::Result;
use crate::tensor::{check_against, Dd, Float, GradCheckReport, Mode, RngStream, Tape, Tensor, Var};
use crate::text::EncodedDocument;

/// Step for double-double central differences.
pub const ORACLE_EPS: f64 = 1e-10;

fn loss_fn<'a, T: Float>(
    spec: &'a ModelSpec,
    names: &'a [String],
    docs: &'a [EncodedDocument],
    targets: &'a Tensor<f32>,
    mode: Mode,
    seed: u64,
) -> impl Fn(&mut Tape<T>, &[Var]) -> Result<Var> + 'a {
    move |tape, vars| {
        let bound = names.iter().cloned().zip(vars.iter().copied()).collect();
        let refs: Vec<&EncodedDocument> = docs.iter().collect();
        let mut rng = RngStream::new(seed);
        let out = forward(spec, tape, &bound, &refs, mode, &mut rng)?;
        let t = tape.constant(targets.cast());
        head_loss(tape, out.probs, t, spec.head())
    }
}

/// A model with fresh weights for `spec` and every bias entry shifted by
/// `U(±0.1)`. Zero biases would put ReLU exactly at its kink on padding
/// rows, where the loss is not differentiable.
pub fn random_draw(spec: &ModelSpec, seed: u64) -> Result<Model> {
    let mut model = Model::new(spec.clone(), Vec::new(), seed)?;
    let mut rng = RngStream::keyed(seed, "gradcheck.bias");
    for (name, t) in model.weights.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v += rng.uniform_range(-0.1, 0.1) as f32);
        }
    }
    Ok(model)
}

/// Coordinates to check: up to `per_block` distinct indices per weight
/// block, drawn from `rng`.
pub fn sample_coords(weights: &Weights, per_block: usize, rng: &mut RngStream) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for (b, t) in weights.values().enumerate() {
        let mut idx: Vec<usize> = (0..t.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(per_block);
        idx.sort_unstable();
        coords.extend(idx.into_iter().map(|i| (b, i)));
    }
    coords
}

/// f32 analytic gradient of the loss in `mode` (dropout masks fixed by
/// `seed`) against double-double central differences, over `coords`.
pub fn check_model(
    model: &Model,
    docs: &[EncodedDocument],
    targets: &Tensor<f32>,
    mode: Mode,
    seed: u64,
    coords: &[(usize, usize)],
) -> Result<GradCheckReport> {
    let names: Vec<String> = model.weights.keys().cloned().collect();
    let params: Vec<Tensor<f32>> = model.weights.values().cloned().collect();
    let reference = loss_fn::<Dd>(&model.spec, &names, docs, targets, mode, seed);
    let f = loss_fn::<f32>(&model.spec, &names, docs, targets, mode, seed);
    check_against(reference, f, &params, ORACLE_EPS, coords)
}

/// Random targets matching the head: independent bits for sigmoid, one-hot
/// rows for softmax.
pub fn random_targets(n_docs: usize, n_classes: usize, head: Head, rng: &mut RngStream) -> Tensor<f32> {
    let mut data = vec![0.0f32; n_docs * n_classes];
    for row in data.chunks_mut(n_classes) {
        match head {
            Head::Sigmoid => row.iter_mut().for_each(|v| *v = rng.below(2) as f32),
            Head::Softmax => row[rng.below(n_classes)] = 1.0,
        }
    }
    Tensor::new(vec![n_docs, n_classes], data).expect("target shape")
}

/// One complete draw: weights from [`random_draw`], `n_docs` synthetic
/// documents, random targets, dropout active with masks fixed by `seed`,
/// and `per_block` sampled coordinates per weight block.
pub fn random_check(spec: &ModelSpec, seed: u64, n_docs: usize, per_block: usize) -> Result<GradCheckReport> {
    let model = random_draw(spec, seed)?;
    let mut rng = RngStream::keyed(seed, "gradcheck.draw");
    let docs: Vec<EncodedDocument> = crate::synthetic::mixed_documents(n_docs, 4, seed)
        .iter()
        .map(|t| crate::text::encode_document(t, &model.alphabet, &spec.encoding))
        .collect();
    let targets = random_targets(n_docs, spec.n_classes, spec.head(), &mut rng);
    let coords = sample_coords(&model.weights, per_block, &mut rng);
    check_model(&model, &docs, &targets, Mode::Train, seed, &coords)
}
