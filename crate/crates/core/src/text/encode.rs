use serde::{Deserialize, Serialize};

use super::alphabet::{Alphabet, ALPHABET_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Shape bounds applied when encoding documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Characters kept per sentence (head truncation).
    pub max_chars: usize,
    /// Sentences kept per document (head truncation, zero padding at the tail).
    pub max_sentences: usize,
    pub lowercase: bool,
}

impl EncodingConfig {
    pub fn new(max_chars: usize, max_sentences: usize) -> Result<Self> {
        let cfg = Self {
            max_chars,
            max_sentences,
            lowercase: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_chars == 0 || self.max_sentences == 0 {
            return Err(Error::InvalidArgument(format!(
                "max_chars and max_sentences must be >= 1 (got {} and {})",
                self.max_chars, self.max_sentences
            )));
        }
        Ok(())
    }
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            max_chars: 256,
            max_sentences: 30,
            lowercase: true,
        }
    }
}

const NO_SYMBOL: u8 = u8::MAX;

/// One sentence as a `[max_chars × 71]` one-hot grid, stored as per-row
/// symbol indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSentence {
    rows: Vec<u8>,
}

impl EncodedSentence {
    pub fn blank(max_chars: usize) -> Self {
        Self {
            rows: vec![NO_SYMBOL; max_chars],
        }
    }

    pub fn max_chars(&self) -> usize {
        self.rows.len()
    }

    /// Hot column of row `t`, or `None` for an all-zero row.
    pub fn hot(&self, t: usize) -> Option<usize> {
        match self.rows[t] {
            NO_SYMBOL => None,
            i => Some(i as usize),
        }
    }

    pub fn is_blank(&self) -> bool {
        self.rows.iter().all(|&r| r == NO_SYMBOL)
    }

    pub fn ones(&self) -> usize {
        self.rows.iter().filter(|&&r| r != NO_SYMBOL).count()
    }

    /// Writes the dense grid into `out` (length `max_chars * 71`), which must
    /// be zeroed.
    pub(crate) fn write_one_hot<T: num_traits::Float>(&self, out: &mut [T]) {
        for (t, &r) in self.rows.iter().enumerate() {
            if r != NO_SYMBOL {
                out[t * ALPHABET_SIZE + r as usize] = T::one();
            }
        }
    }

    pub fn grid(&self) -> Tensor<f32> {
        let mut data = vec![0.0f32; self.rows.len() * ALPHABET_SIZE];
        self.write_one_hot(&mut data);
        Tensor::new(vec![self.rows.len(), ALPHABET_SIZE], data).expect("grid shape")
    }
}

/// Exactly `max_sentences` encoded sentences.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedDocument {
    pub sentences: Vec<EncodedSentence>,
}

impl EncodedDocument {
    pub fn max_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn max_chars(&self) -> usize {
        self.sentences.first().map_or(0, |s| s.max_chars())
    }

    pub fn matches(&self, cfg: &EncodingConfig) -> bool {
        self.sentences.len() == cfg.max_sentences
            && self.sentences.iter().all(|s| s.max_chars() == cfg.max_chars)
    }

    /// Dense `[max_sentences × max_chars × 71]` tensor.
    pub fn grid(&self) -> Tensor<f32> {
        let (s, c) = (self.max_sentences(), self.max_chars());
        let mut data = vec![0.0f32; s * c * ALPHABET_SIZE];
        for (i, sentence) in self.sentences.iter().enumerate() {
            let stride = c * ALPHABET_SIZE;
            sentence.write_one_hot(&mut data[i * stride..(i + 1) * stride]);
        }
        Tensor::new(vec![s, c, ALPHABET_SIZE], data).expect("document shape")
    }
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Splits after every maximal run of `.`, `!`, `?` or newline. Segments are
/// whitespace-trimmed, empty ones dropped, and at most `max_sentences` are
/// returned.
pub fn split_sentences(text: &str, cfg: &EncodingConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if out.len() == cfg.max_sentences {
            return out;
        }
        let ends_run = is_delimiter(c) && chars.peek().is_none_or(|&(_, n)| !is_delimiter(n));
        if ends_run {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    if out.len() < cfg.max_sentences {
        push_trimmed(&mut out, &text[start..]);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, segment: &str) {
    let s = segment.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

pub fn encode_sentence(s: &str, alphabet: &Alphabet, cfg: &EncodingConfig) -> EncodedSentence {
    let mut sentence = EncodedSentence::blank(cfg.max_chars);
    let lowered;
    let s = if cfg.lowercase {
        lowered = s.to_lowercase();
        lowered.as_str()
    } else {
        s
    };
    for (t, c) in s.chars().take(cfg.max_chars).enumerate() {
        if let Some(i) = alphabet.index_of(c) {
            sentence.rows[t] = i as u8;
        }
    }
    sentence
}

pub fn encode_document(text: &str, alphabet: &Alphabet, cfg: &EncodingConfig) -> EncodedDocument {
    let mut sentences: Vec<EncodedSentence> = split_sentences(text, cfg)
        .iter()
        .map(|s| encode_sentence(s, alphabet, cfg))
        .collect();
    sentences.resize(cfg.max_sentences, EncodedSentence::blank(cfg.max_chars));
    EncodedDocument { sentences }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(max_chars: usize, max_sentences: usize) -> EncodingConfig {
        EncodingConfig::new(max_chars, max_sentences).unwrap()
    }

    #[test]
    fn splits_on_terminators() {
        let c = cfg(16, 30);
        assert_eq!(split_sentences("Hi. Bye!", &c), vec!["Hi.", "Bye!"]);
        assert!(split_sentences("", &c).is_empty());
        assert_eq!(split_sentences("a.b.c.", &cfg(16, 2)), vec!["a.", "b."]);
        assert_eq!(
            split_sentences("Really?!  ok\n\nnext", &c),
            vec!["Really?!", "ok", "next"]
        );
        assert!(split_sentences(" \n\n ", &c).is_empty());
    }

    #[test]
    fn encodes_single_char() {
        let a = Alphabet::canonical();
        let s = encode_sentence("a", &a, &cfg(3, 1));
        let g = s.grid();
        assert_eq!(g.shape(), &[3, 71]);
        assert_eq!(g.data()[0], 1.0);
        assert_eq!(g.data().iter().sum::<f32>(), 1.0);
        assert!(encode_sentence("", &a, &cfg(3, 1)).is_blank());
    }

    #[test]
    fn truncates_long_sentences_at_head() {
        let a = Alphabet::canonical();
        let text: String = (0..200).map(|i| if i < 100 { 'x' } else { 'y' }).collect();
        let s = encode_sentence(&text, &a, &cfg(100, 1));
        assert_eq!(s.ones(), 100);
        assert!((0..100).all(|t| s.hot(t) == a.index_of('x')));
    }

    #[test]
    fn out_of_alphabet_and_case() {
        let a = Alphabet::canonical();
        let s = encode_sentence("Aé", &a, &cfg(4, 1));
        assert_eq!(s.hot(0), Some(0));
        assert_eq!(s.hot(1), None);
        let raw = EncodingConfig {
            lowercase: false,
            ..cfg(4, 1)
        };
        assert_eq!(encode_sentence("A", &a, &raw).hot(0), None);
    }

    #[test]
    fn documents_are_padded() {
        let a = Alphabet::canonical();
        let d = encode_document("", &a, &cfg(8, 3));
        assert_eq!(d.grid().shape(), &[3, 8, 71]);
        assert!(d.sentences.iter().all(|s| s.is_blank()));
        let d = encode_document("hello there.", &a, &cfg(8, 4));
        assert_eq!(d.max_sentences(), 4);
        assert!(!d.sentences[0].is_blank());
        assert!(d.sentences[1..].iter().all(|s| s.is_blank()));
    }

    proptest! {
        #[test]
        fn rows_are_one_hot_or_zero(text in "\\PC{0,120}", max_chars in 1usize..40, max_sentences in 1usize..6) {
            let a = Alphabet::canonical();
            let c = cfg(max_chars, max_sentences);
            let d = encode_document(&text, &a, &c);
            prop_assert!(d.matches(&c));
            let g = d.grid();
            prop_assert_eq!(g.shape(), &[max_sentences, max_chars, 71][..]);
            for row in g.data().chunks(71) {
                let s: f32 = row.iter().sum();
                prop_assert!(s == 0.0 || s == 1.0);
            }
            for s in split_sentences(&text, &c) {
                let e = encode_sentence(&s, &a, &c);
                prop_assert!(e.ones() <= s.to_lowercase().chars().count().min(max_chars));
            }
            prop_assert_eq!(encode_document(&text, &a, &c), d);
        }
    }
}
