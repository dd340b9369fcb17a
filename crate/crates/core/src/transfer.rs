//! Head replacement, layer freezing and fine-tuning.

use crate::error::{Error, Result};
use crate::model::{init_block, param_name, LayerSpec, Model};
use crate::synthetic::label_name;
use crate::tensor::RngStream;
use crate::text::{encode_document, LabeledDataset};
use crate::training::{train_masked, Hyperparams, TrainableMask, TrainingHistory};

/// Names of the final dense layer's weight and bias.
pub fn head_blocks(model: &Model) -> [String; 2] {
    let i = model.spec.classifier.len() - 1;
    [param_name("classifier", i, "dense", "weight"), param_name("classifier", i, "dense", "bias")]
}

/// Rebuilds the final dense layer at `n_new_classes` outputs with fresh
/// seeded weights; every other block is kept bit for bit and the label
/// vocabulary is cleared.
pub fn replace_head(model: &Model, n_new_classes: usize, seed: u64) -> Result<Model> {
    if n_new_classes < 2 {
        return Err(Error::InvalidArgument(format!("n_new_classes {n_new_classes} < 2")));
    }
    let mut out = model.clone();
    match out.spec.classifier.last_mut() {
        Some(LayerSpec::Dense { units, .. }) => *units = n_new_classes,
        other => return Err(Error::InvalidArgument(format!("classifier ends in {other:?}, not a dense head"))),
    }
    out.spec.n_classes = n_new_classes;
    out.labels.clear();
    let shapes = out.spec.param_shapes()?;
    for name in head_blocks(&out) {
        let shape = &shapes.iter().find(|(n, _)| *n == name).expect("head block in spec").1;
        out.weights.insert(name.clone(), init_block(&name, shape, seed));
    }
    out.check()?;
    Ok(out)
}

/// Block-name prefixes to freeze, e.g. `encoder` or `classifier.00`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreezeSpec {
    pub patterns: Vec<String>,
}

impl FreezeSpec {
    /// Comma-separated prefixes; blank entries are dropped.
    pub fn parse(text: &str) -> Self {
        let patterns = text.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::to_owned).collect();
        Self { patterns }
    }

    /// Every block of the model except the head.
    pub fn all_but_head(model: &Model) -> Self {
        let head = head_blocks(model);
        Self { patterns: model.weights.keys().filter(|k| !head.contains(k)).cloned().collect() }
    }
}

fn matches(name: &str, pattern: &str) -> bool {
    name == pattern || (name.starts_with(pattern) && (pattern.ends_with('.') || name[pattern.len()..].starts_with('.')))
}

/// Resolves `spec` against the model's blocks. A pattern is a full block
/// name or a dot-delimited prefix of one; each must match at least once.
pub fn freeze(model: &Model, spec: &FreezeSpec) -> Result<TrainableMask> {
    let mut frozen = Vec::new();
    for p in &spec.patterns {
        let hits: Vec<&String> = model.weights.keys().filter(|k| matches(k, p)).collect();
        if hits.is_empty() {
            return Err(Error::InvalidArgument(format!("freeze pattern `{p}` matches no weight block")));
        }
        frozen.extend(hits.into_iter().cloned());
    }
    Ok(TrainableMask::freezing(frozen))
}

/// The standard training loop restricted to the unfrozen blocks.
pub fn fine_tune(
    model: &mut Model,
    mask: &TrainableMask,
    train_set: &LabeledDataset,
    val_set: Option<&LabeledDataset>,
    hp: &Hyperparams,
) -> Result<TrainingHistory> {
    train_masked(model, mask, train_set, val_set, hp)
}

/// A `2^bits`-class task over `texts`: class bit `j` is set when the
/// document's feature vector projects above the median onto random
/// direction `j`. Labels are `class0`, `class1`, ... with every class in the
/// vocabulary.
pub fn projection_task(model: &Model, texts: &[String], bits: usize, seed: u64) -> Result<LabeledDataset> {
    if texts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!("bits {bits} not in 1..=8")));
    }
    let docs: Vec<_> = texts.iter().map(|t| encode_document(t, &model.alphabet, &model.spec.encoding)).collect();
    let feats = model.features(&docs)?;
    let dim = model.spec.feature_dim;
    let mut rng = RngStream::keyed(seed, "transfer.projection");
    let mut codes = vec![0usize; texts.len()];
    for j in 0..bits {
        let dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let proj: Vec<f64> = feats.iter().map(|f| f.iter().zip(&dir).map(|(&a, &b)| a as f64 * b).sum()).collect();
        let mut sorted = proj.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        for (c, &p) in codes.iter_mut().zip(&proj) {
            if p >= median {
                *c |= 1 << j;
            }
        }
    }
    let mut d = LabeledDataset::new((0..1usize << bits).map(label_name).collect());
    for (t, &c) in texts.iter().zip(&codes) {
        d.push(t.clone(), &[&label_name(c)]);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_default_spec, build_spec, Head};
    use crate::synthetic::{mixed_documents, separable_dataset};
    use crate::text::EncodingConfig;

    fn small(n: usize, seed: u64) -> Model {
        let spec = build_spec(n, EncodingConfig::new(32, 4).unwrap(), 0.05, Head::Sigmoid).unwrap();
        Model::new(spec, vec!["friend".into(), "foe".into()], seed).unwrap()
    }

    #[test]
    fn replace_head_keeps_the_body() {
        let m = small(2, 1);
        let r = replace_head(&m, 8, 7).unwrap();
        assert_eq!(r.n_classes(), 8);
        assert!(r.labels.is_empty());
        let head = head_blocks(&r);
        for (k, v) in &m.weights {
            if head.contains(k) {
                assert_ne!(r.weights[k].shape(), v.shape());
            } else {
                assert_eq!(&r.weights[k], v, "{k}");
            }
        }
        assert_eq!(r, replace_head(&m, 8, 7).unwrap());
        assert_eq!(replace_head(&r, 8, 7).unwrap(), r);
        assert_ne!(r.weights[&head[0]], replace_head(&m, 8, 8).unwrap().weights[&head[0]]);
        let doc = encode_document("hello. wire me.", &r.alphabet, &r.spec.encoding);
        assert_eq!(r.predict(&[doc]).unwrap()[0].len(), 8);
        assert!(replace_head(&m, 1, 0).is_err());
    }

    #[test]
    fn freeze_counts_match_block_sums() {
        let spec = build_default_spec(2, EncodingConfig::default(), 1.0).unwrap();
        let m = Model::new(spec.clone(), vec![], 0).unwrap();
        let shapes = spec.param_shapes().unwrap();
        let size = |pred: &dyn Fn(&str) -> bool| -> usize {
            shapes.iter().filter(|(n, _)| pred(n)).map(|(_, s)| s.iter().product::<usize>()).sum()
        };
        let enc = freeze(&m, &FreezeSpec::parse("encoder")).unwrap();
        assert_eq!(enc.trainable_params(&m), size(&|n| n.starts_with("classifier.")));
        assert_eq!(freeze(&m, &FreezeSpec::default()).unwrap().trainable_params(&m), m.param_count());
        let head_only = freeze(&m, &FreezeSpec::all_but_head(&m)).unwrap();
        let h = spec.feature_dim * 2 + 2;
        assert_eq!(head_only.trainable_params(&m), h);
        assert!(enc.trainable_params(&m) < m.param_count());
        assert!(freeze(&m, &FreezeSpec::parse("encode")).is_err());
        assert!(freeze(&m, &FreezeSpec::parse("decoder")).is_err());
        assert_eq!(FreezeSpec::parse(" encoder, classifier.00 ,").patterns, vec!["encoder", "classifier.00"]);
    }

    #[test]
    fn fine_tune_leaves_frozen_encoder_untouched() {
        let base = small(2, 3);
        let mut m = replace_head(&base, 3, 4).unwrap();
        let mask = freeze(&m, &FreezeSpec::parse("encoder")).unwrap();
        let data = separable_dataset(9, 3, 5);
        let hp = Hyperparams { epochs: 5, batch_size: 4, ..Hyperparams::default() };
        let h = fine_tune(&mut m, &mask, &data, None, &hp).unwrap();
        assert_eq!(h.epochs.len(), 5);
        assert_eq!(m.labels, data.label_vocab);
        for (k, v) in &base.weights {
            if k.starts_with("encoder.") {
                assert_eq!(&m.weights[k], v);
            }
        }
        let before = m.clone();
        fine_tune(&mut m, &mask, &data, None, &Hyperparams { epochs: 0, ..hp }).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn projection_task_splits_on_medians() {
        let m = small(2, 6);
        let texts = mixed_documents(40, 8, 7);
        let d = projection_task(&m, &texts, 3, 8).unwrap();
        assert_eq!(d.label_vocab.len(), 8);
        assert_eq!(d.len(), 40);
        for bit in 0..3 {
            let set = d.records.iter().filter(|r| r.labels[0] >> bit & 1 == 1).count();
            assert!((18..=24).contains(&set), "bit {bit}: {set}");
        }
        assert_eq!(d, projection_task(&m, &texts, 3, 8).unwrap());
    }
}
