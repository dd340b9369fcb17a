//! Seeded synthetic corpora for tests and demos.
//!
//! Each class owns a disjoint subset of the lowercase letters; words of a
//! class document are drawn only from its letters, so classes are separable
//! from character statistics alone.

use crate::tensor::RngStream;
use crate::text::LabeledDataset;

/// Partition of `a..=z` into `n_classes` round-robin letter groups.
pub fn class_letters(n_classes: usize) -> Vec<Vec<char>> {
    let n = n_classes.clamp(1, 26);
    let mut groups = vec![Vec::new(); n];
    for (i, c) in ('a'..='z').enumerate() {
        groups[i % n].push(c);
    }
    groups
}

pub fn label_name(class: usize) -> String {
    format!("class{class}")
}

fn word(letters: &[char], rng: &mut RngStream) -> String {
    let len = 2 + rng.below(5);
    (0..len).map(|_| letters[rng.below(letters.len())]).collect()
}

/// Text of `sentences` sentences, 3 to 7 words each, spelled from `letters`.
pub fn text_from(letters: &[char], sentences: usize, rng: &mut RngStream) -> String {
    let mut out = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let n = 3 + rng.below(5);
        let words: Vec<String> = (0..n).map(|_| word(letters, rng)).collect();
        out.push(format!("{}.", words.join(" ")));
    }
    out.join(" ")
}

/// `n_docs` documents, class `i % n_classes` for document `i`, with labels
/// `class0`, `class1`, ... in vocabulary order.
pub fn separable_dataset(n_docs: usize, n_classes: usize, seed: u64) -> LabeledDataset {
    let groups = class_letters(n_classes);
    let mut rng = RngStream::keyed(seed, "synthetic.separable");
    let mut d = LabeledDataset::new((0..groups.len()).map(label_name).collect());
    for i in 0..n_docs {
        let c = i % groups.len();
        let sentences = 1 + rng.below(4);
        let text = text_from(&groups[c], sentences, &mut rng);
        d.push(text, &[&label_name(c)]);
    }
    d
}

/// Unlabeled documents spelled from the whole alphabet, each leaning
/// towards a random pair of letter groups out of `n_groups`.
pub fn mixed_documents(n_docs: usize, n_groups: usize, seed: u64) -> Vec<String> {
    let groups = class_letters(n_groups);
    let mut rng = RngStream::keyed(seed, "synthetic.mixed");
    (0..n_docs)
        .map(|_| {
            let a = rng.below(groups.len());
            let b = rng.below(groups.len());
            let mut letters = groups[a].clone();
            letters.extend(&groups[b]);
            let sentences = 1 + rng.below(4);
            text_from(&letters, sentences, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_letters_partition_the_alphabet() {
        for n in [2, 3, 8] {
            let g = class_letters(n);
            assert_eq!(g.len(), n);
            let mut all: Vec<char> = g.concat();
            all.sort();
            assert_eq!(all, ('a'..='z').collect::<Vec<_>>());
        }
    }

    #[test]
    fn dataset_is_seeded_and_class_pure() {
        let a = separable_dataset(12, 3, 5);
        assert_eq!(a, separable_dataset(12, 3, 5));
        assert_ne!(a, separable_dataset(12, 3, 6));
        let groups = class_letters(3);
        for r in &a.records {
            let letters = &groups[r.labels[0]];
            assert!(r.text.chars().filter(|c| c.is_alphabetic()).all(|c| letters.contains(&c)));
        }
        assert_eq!(a.single_label_counts(), vec![4, 4, 4]);
        assert_eq!(mixed_documents(4, 8, 1), mixed_documents(4, 8, 1));
    }
}
