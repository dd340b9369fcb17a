use std::collections::HashMap;

use crate::error::{Error, Result};

/// Number of symbols in every alphabet.
pub const ALPHABET_SIZE: usize = 71;

const LETTERS_AND_DIGITS: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
// Classic character-CNN punctuation in its published order, with the repeated
// '-' removed.
const PUNCTUATION: &str = "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}";
const WHITESPACE: [char; 3] = ['\n', ' ', '\t'];

/// Ordered character dictionary with O(1) symbol lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, u8>,
}

impl Alphabet {
    /// The canonical 71-symbol alphabet: lowercase letters, digits, 32
    /// punctuation marks, newline, space and tab, in that order.
    pub fn canonical() -> Self {
        let symbols: Vec<char> = LETTERS_AND_DIGITS
            .chars()
            .chain(PUNCTUATION.chars())
            .chain(WHITESPACE)
            .collect();
        Self::from_symbols(symbols).expect("canonical alphabet is valid")
    }

    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.len() != ALPHABET_SIZE {
            return Err(Error::InvalidArgument(format!(
                "alphabet must have {ALPHABET_SIZE} symbols, got {}",
                symbols.len()
            )));
        }
        let mut index = HashMap::with_capacity(ALPHABET_SIZE);
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i as u8).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate alphabet symbol {:?}",
                    c
                )));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).map(|&i| i as usize)
    }

    /// One symbol per line. Backslash, newline, tab, carriage return and space
    /// are escaped as `\\`, `\n`, `\t`, `\r` and `\s`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for &c in &self.symbols {
            match c {
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\t' => out.push_str("\\t"),
                '\r' => out.push_str("\\r"),
                ' ' => out.push_str("\\s"),
                c => out.push(c),
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut symbols = Vec::with_capacity(ALPHABET_SIZE);
        for (n, line) in text.lines().enumerate() {
            let mut chars = line.chars();
            let symbol = match (chars.next(), chars.next(), chars.next()) {
                (Some('\\'), Some(e), None) => match e {
                    '\\' => '\\',
                    'n' => '\n',
                    't' => '\t',
                    'r' => '\r',
                    's' => ' ',
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "alphabet line {}: unknown escape \\{other}",
                            n + 1
                        )))
                    }
                },
                (Some(c), None, None) => c,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "alphabet line {}: expected one symbol, got {:?}",
                        n + 1,
                        line
                    )))
                }
            };
            symbols.push(symbol);
        }
        Self::from_symbols(symbols)
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_has_71_distinct_symbols() {
        let a = Alphabet::canonical();
        assert_eq!(a.len(), 71);
        for (i, &c) in a.symbols().iter().enumerate() {
            assert_eq!(a.index_of(c), Some(i));
        }
        assert_eq!(a.index_of('a'), Some(0));
        assert_eq!(a.index_of(' '), Some(69));
        assert_eq!(a.index_of('A'), None);
    }

    #[test]
    fn serialization_round_trips() {
        let a = Alphabet::canonical();
        let text = a.serialize();
        assert_eq!(text.lines().count(), 71);
        assert_eq!(Alphabet::parse(&text).unwrap(), a);
    }

    #[test]
    fn rejects_duplicates_and_wrong_size() {
        let mut s = Alphabet::canonical().symbols().to_vec();
        s[1] = 'a';
        assert!(Alphabet::from_symbols(s.clone()).is_err());
        s.pop();
        assert!(Alphabet::from_symbols(s).is_err());
        assert!(Alphabet::parse("ab\n").is_err());
    }
}
