//! Raw text to fixed-shape one-hot tensors, plus labeled-dataset ingestion.

mod alphabet;
pub mod corpora;
mod dataset;
mod encode;

pub use alphabet::{Alphabet, ALPHABET_SIZE};
pub use dataset::{balance_sample, load_dataset, DatasetFormat, LabeledDataset, Record};
pub use encode::{
    encode_document, encode_sentence, split_sentences, EncodedDocument, EncodedSentence,
    EncodingConfig,
};
