//! Data model, annotation files, tokenization, monetary tagging, splitting and
//! the synthetic corpus generator.

pub mod io;
pub mod monetary;
pub mod split;
pub mod subword;
pub mod synth;
pub mod tokenize;
pub mod types;

pub use io::{read_annotations, write_annotations};
pub use monetary::{filter_sentences, tag_monetary_numbers, MonetaryRules, MonetaryTag, Scale, Unit};
pub use split::{split_corpus, Splits, REFERENCE_RATIOS};
pub use subword::{SubwordSentence, Vocab, VocabConfig};
pub use synth::{generate_synthetic_corpus, GeneratorConfig};
pub use tokenize::tokenize_words;
pub use types::{Document, Entity, EntityType, Relation, Sentence, SentenceKey};
