//! Readers for the two public email corpora: the Kaggle Enron dump
//! (`emails.csv`, columns `file,message`) and the Kaggle fraudulent-email
//! corpus (`fradulent_emails.txt`, an mbox-style concatenation of 419 scams).
//!
//! Both readers strip RFC 822 headers and keep the message body.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};

pub const FRIEND: &str = "friend";
pub const FOE: &str = "foe";

/// Body of an RFC 822 message: everything after the first blank line, or the
/// whole text when no header block is present.
pub fn message_body(message: &str) -> &str {
    let looks_like_header = message
        .lines()
        .next()
        .is_some_and(|l| l.split_once(':').is_some_and(|(k, _)| !k.contains(' ')) || l.starts_with("From "));
    if !looks_like_header {
        return message.trim();
    }
    for sep in ["\r\n\r\n", "\n\n"] {
        if let Some(i) = message.find(sep) {
            return message[i + sep.len()..].trim();
        }
    }
    ""
}

/// Uniform reservoir sample of at most `k` items, deterministic in `seed`.
fn reservoir<T>(items: impl Iterator<Item = T>, k: Option<usize>, seed: u64) -> Vec<T> {
    let Some(k) = k else {
        return items.collect();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::with_capacity(k);
    for (n, item) in items.enumerate() {
        if kept.len() < k {
            kept.push(item);
        } else {
            let j = rng.random_range(0..=n);
            if j < k {
                kept[j] = item;
            }
        }
    }
    kept
}

/// Enron messages labeled `friend`. Empty bodies are skipped; `sample`
/// bounds the result with a seeded reservoir draw over the whole file.
pub fn load_enron(path: impl AsRef<Path>, sample: Option<usize>, seed: u64) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "message")
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing `message` column".into(),
        })?;
    let mut bodies = Vec::new();
    let mut failure = None;
    let rows = reader.records().map_while(|r| match r {
        Ok(row) => Some(row),
        Err(e) => {
            failure = Some(Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            });
            None
        }
    });
    let texts = rows.filter_map(|row| {
        let body = message_body(row.get(col)?);
        (!body.is_empty()).then(|| body.to_string())
    });
    bodies.extend(reservoir(texts, sample, seed));
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(labeled(bodies, FRIEND))
}

/// 419 scam messages labeled `foe`. The file is split on mbox `From ` lines
/// and decoded lossily (it is not valid UTF-8 throughout).
pub fn load_fraud(path: impl AsRef<Path>, sample: Option<usize>, seed: u64) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let bodies = reservoir(
        split_mbox(&text)
            .into_iter()
            .map(message_body)
            .filter(|b| !b.is_empty())
            .map(str::to_string),
        sample,
        seed,
    );
    Ok(labeled(bodies, FOE))
}

/// Splits an mbox stream into messages at lines starting with `From `.
pub fn split_mbox(text: &str) -> Vec<&str> {
    let mut starts: Vec<usize> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.starts_with("From ") {
            starts.push(offset);
        }
        offset += line.len();
    }
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    starts.push(text.len());
    starts
        .windows(2)
        .map(|w| &text[w[0]..w[1]])
        .filter(|m| !m.trim().is_empty())
        .collect()
}

fn labeled(bodies: Vec<String>, label: &str) -> LabeledDataset {
    let mut ds = LabeledDataset::new(vec![label.to_string()]);
    for b in bodies {
        ds.push(b, &[label]);
    }
    ds
}

/// Friend/foe dataset from both corpora, `per_class` records each.
pub fn load_friend_foe(
    enron: impl AsRef<Path>,
    fraud: impl AsRef<Path>,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::new(vec![FRIEND.into(), FOE.into()]);
    ds.extend(&load_enron(enron, Some(per_class), seed)?);
    ds.extend(&load_fraud(fraud, Some(per_class), seed.wrapping_add(1))?);
    super::balance_sample(&ds, per_class, seed)
}
