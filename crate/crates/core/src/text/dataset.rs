use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub text: String,
    /// Sorted, distinct label ids into the dataset's vocabulary.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub records: Vec<Record>,
    pub label_vocab: Vec<String>,
}

impl LabeledDataset {
    pub fn new(label_vocab: Vec<String>) -> Self {
        Self {
            records: Vec::new(),
            label_vocab,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Id of `name`, appending it to the vocabulary on first sight.
    pub fn intern_label(&mut self, name: &str) -> usize {
        match self.label_vocab.iter().position(|l| l == name) {
            Some(i) => i,
            None => {
                self.label_vocab.push(name.to_string());
                self.label_vocab.len() - 1
            }
        }
    }

    pub fn push(&mut self, text: impl Into<String>, label_names: &[&str]) {
        let mut labels: Vec<usize> = label_names.iter().map(|l| self.intern_label(l)).collect();
        labels.sort_unstable();
        labels.dedup();
        self.records.push(Record {
            text: text.into(),
            labels,
        });
    }

    /// Count of single-label records per class, in vocabulary order.
    pub fn single_label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_vocab.len()];
        for r in &self.records {
            if let [l] = r.labels[..] {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Re-expresses label ids against `vocab`, matching by name.
    pub fn align_to(&self, vocab: &[String]) -> Result<LabeledDataset> {
        let map: Vec<usize> = self
            .label_vocab
            .iter()
            .map(|name| {
                vocab
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| Error::UnknownLabel(name.clone()))
            })
            .collect::<Result<_>>()?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut labels: Vec<usize> = r.labels.iter().map(|&l| map[l]).collect();
                labels.sort_unstable();
                Record {
                    text: r.text.clone(),
                    labels,
                }
            })
            .collect();
        Ok(LabeledDataset {
            records,
            label_vocab: vocab.to_vec(),
        })
    }

    /// Appends `other`, merging vocabularies by name.
    pub fn extend(&mut self, other: &LabeledDataset) {
        for r in &other.records {
            let names: Vec<&str> = r
                .labels
                .iter()
                .map(|&l| other.label_vocab[l].as_str())
                .collect();
            self.push(r.text.clone(), &names);
        }
    }

    /// Seeded shuffle followed by a head/tail split; the head holds
    /// `round(len * (1 - fraction))` records.
    pub fn split(&self, fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_head = ((self.len() as f64) * (1.0 - fraction)).round() as usize;
        let take = |ids: &[usize]| LabeledDataset {
            records: ids.iter().map(|&i| self.records[i].clone()).collect(),
            label_vocab: self.label_vocab.clone(),
        };
        (take(&idx[..n_head]), take(&idx[n_head..]))
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    text: String,
    labels: Vec<String>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::Csv => load_csv(path, file),
        DatasetFormat::Jsonl => load_jsonl(path, file),
    }
}

fn load_csv(path: &Path, file: File) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("missing `{name}` column in header")))
    };
    let (text_col, label_col) = (column("text")?, column("label")?);
    let mut ds = LabeledDataset::default();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let (Some(text), Some(label)) = (row.get(text_col), row.get(label_col)) else {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", headers.len(), row.len()),
            ));
        };
        let label = label.trim();
        if label.is_empty() {
            return Err(parse_err(line, "empty label".into()));
        }
        ds.push(text, &[label]);
    }
    Ok(ds)
}

fn load_jsonl(path: &Path, file: File) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n as u64 + 1,
            message: e.to_string(),
        })?;
        let names: Vec<&str> = rec.labels.iter().map(String::as_str).collect();
        ds.push(rec.text, &names);
    }
    Ok(ds)
}

/// Draws exactly `n_per_class` single-label records of every class without
/// replacement. Selected records keep their original relative order.
pub fn balance_sample(d: &LabeledDataset, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n_per_class * d.label_vocab.len());
    for (class, name) in d.label_vocab.iter().enumerate() {
        let mut pool: Vec<usize> = d
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.labels == [class])
            .map(|(i, _)| i)
            .collect();
        if pool.len() < n_per_class {
            return Err(Error::InsufficientClass {
                class: name.clone(),
                count: pool.len(),
                needed: n_per_class,
            });
        }
        let (picked, _) = pool.partial_shuffle(&mut rng, n_per_class);
        chosen.extend_from_slice(picked);
    }
    chosen.sort_unstable();
    Ok(LabeledDataset {
        records: chosen.iter().map(|&i| d.records[i].clone()).collect(),
        label_vocab: d.label_vocab.clone(),
    })
}
