use rand::seq::SliceRandom;

use super::types::Document;
use crate::error::{Error, Result};
use crate::numerics::rng::{stream, Stream};

/// Train/validation/test fractions matching the reference corpus
/// (13835 / 821 / 738 sentences).
pub const REFERENCE_RATIOS: [f64; 3] = [13835.0 / 15394.0, 821.0 / 15394.0, 738.0 / 15394.0];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<Document>,
    pub validation: Vec<Document>,
    pub test: Vec<Document>,
}

impl Splits {
    pub fn num_sentences(docs: &[Document]) -> usize {
        docs.iter().map(|d| d.sentences.len()).sum()
    }
}

/// Randomly assigns whole documents to train, validation and test.
///
/// Validation and test sizes are `round(ratio * n)`, train takes the rest; any
/// split with a nonzero ratio receives at least one document. Documents keep
/// their input order within a split.
pub fn split_corpus(documents: Vec<Document>, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Config(format!("split ratios must be >= 0: {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {total}, not 1")));
    }
    let n = documents.len();
    let wanted = ratios.iter().filter(|r| **r > 0.0).count();
    if n < wanted {
        return Err(Error::Config(format!(
            "{n} documents cannot fill {wanted} non-empty splits"
        )));
    }
    let size = |r: f64| {
        if r > 0.0 {
            ((r * n as f64).round() as usize).max(1)
        } else {
            0
        }
    };
    let n_val = size(ratios[1]);
    let n_test = size(ratios[2]);
    let n_train = n
        .checked_sub(n_val + n_test)
        .filter(|t| *t > 0 || ratios[0] == 0.0)
        .ok_or_else(|| Error::Config(format!("{n} documents too few for ratios {ratios:?}")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Stream::Split));
    let mut assign = vec![0u8; n];
    for (rank, doc) in order.iter().enumerate() {
        assign[*doc] = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
    }
    let mut splits = Splits::default();
    for (doc, which) in documents.into_iter().zip(assign) {
        match which {
            0 => splits.train.push(doc),
            1 => splits.validation.push(doc),
            _ => splits.test.push(doc),
        }
    }
    Ok(splits)
}
