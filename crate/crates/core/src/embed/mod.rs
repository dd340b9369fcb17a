//! Document embeddings, exact t-SNE, silhouette scores and scatter plots.

mod silhouette;
mod tsne;

pub use silhouette::silhouette;
pub use tsne::{joint_probabilities, kl_divergence, perplexity_calibration, tsne, Calibration, TsneConfig, TsneResult};

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::plot;
use crate::text::{encode_document, EncodedDocument, LabeledDataset};

/// Penultimate-layer features of a set of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub label_names: Vec<String>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.ids.len();
        if self.matrix.len() != n || self.labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::Shape("embedding rows, ids and labels disagree".into()));
        }
        if self.matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding entry".into()));
        }
        Ok(())
    }
}

/// Eval-mode features for `docs`, ids `0..N`.
pub fn extract_embeddings(model: &Model, docs: &[EncodedDocument]) -> Result<EmbeddingSet> {
    let feats = crate::training::predict_features(model, docs)?;
    let set = EmbeddingSet {
        ids: (0..docs.len()).map(|i| i.to_string()).collect(),
        matrix: feats.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(),
        labels: None,
        label_names: Vec::new(),
    };
    set.check()?;
    Ok(set)
}

/// Embeds every record of `d`; labels are kept when each record has exactly
/// one.
pub fn embed_dataset(model: &Model, d: &LabeledDataset) -> Result<EmbeddingSet> {
    let docs: Vec<EncodedDocument> = d.records.iter().map(|r| encode_document(&r.text, &model.alphabet, &model.spec.encoding)).collect();
    let mut set = extract_embeddings(model, &docs)?;
    if d.records.iter().all(|r| r.labels.len() == 1) {
        set.labels = Some(d.records.iter().map(|r| r.labels[0]).collect());
        set.label_names = d.label_vocab.clone();
    }
    Ok(set)
}

/// Mean squared distance to the class centroid, per label.
pub fn class_variance(points: &[Vec<f64>], labels: &[usize]) -> BTreeMap<usize, f64> {
    let mut groups: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (p, &l) in points.iter().zip(labels) {
        groups.entry(l).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(l, pts)| {
            let dim = pts[0].len();
            let centroid: Vec<f64> = (0..dim).map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64).collect();
            let var = pts.iter().map(|p| p.iter().zip(&centroid).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()).sum::<f64>()
                / pts.len() as f64;
            (l, var)
        })
        .collect()
}

/// CSV `id,x,y,label`; the label cell is empty for unlabeled points.
pub fn scatter_csv(ids: &[String], coords: &[[f64; 2]], labels: Option<&[usize]>, names: &[String]) -> String {
    let mut out = String::from("id,x,y,label\n");
    for (i, (id, c)) in ids.iter().zip(coords).enumerate() {
        let label = labels.map(|l| names.get(l[i]).cloned().unwrap_or_else(|| l[i].to_string())).unwrap_or_default();
        let _ = writeln!(out, "{id},{},{},{label}", c[0], c[1]);
    }
    out
}

/// One colour per label with a legend; a single colour and no legend when
/// `labels` is `None`.
pub fn scatter_svg(title: &str, coords: &[[f64; 2]], labels: Option<&[usize]>, names: &[String]) -> String {
    let points: Vec<(f64, f64)> = coords.iter().map(|c| (c[0], c[1])).collect();
    match labels {
        None => plot::scatter_chart(title, &points, &vec![0; points.len()], &[]),
        Some(l) => {
            let distinct: Vec<usize> = l.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let group: Vec<usize> = l.iter().map(|x| distinct.binary_search(x).expect("label present")).collect();
            let legend: Vec<String> = distinct.iter().map(|&x| names.get(x).cloned().unwrap_or_else(|| x.to_string())).collect();
            let refs: Vec<&str> = legend.iter().map(String::as_str).collect();
            plot::scatter_chart(title, &points, &group, &refs)
        }
    }
}

/// Writes [`scatter_svg`] to `svg` and [`scatter_csv`] to `csv`.
pub fn emit_scatter(
    ids: &[String],
    coords: &[[f64; 2]],
    labels: Option<&[usize]>,
    names: &[String],
    svg: &Path,
    csv: &Path,
) -> Result<()> {
    if ids.len() != coords.len() || labels.is_some_and(|l| l.len() != coords.len()) {
        return Err(Error::Shape("ids, coordinates and labels disagree".into()));
    }
    std::fs::write(svg, scatter_svg("t-SNE", coords, labels, names)).map_err(|e| Error::io(svg, e))?;
    std::fs::write(csv, scatter_csv(ids, coords, labels, names)).map_err(|e| Error::io(csv, e))
}

#[cfg(test)]
mod tests;
