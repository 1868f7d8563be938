//! Joint extraction of financial KPI entities and the relations between them.
//!
//! Sentences are encoded into subword embeddings, pooled into word vectors,
//! tagged word by word with IOBES labels by a GRU decoder whose output space is
//! masked by the previously emitted tag, and finally every allowed pair of
//! predicted entities is scored by a sigmoid relation classifier. Impossible
//! type pairs are never scored and overlapping predictions are pruned by the
//! uniqueness rules of the relation matrix.

// `!(x >= 0.0)` is how NaN gets rejected; indexed loops mirror the DP recurrences.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod ner;
pub mod numerics;
pub mod pooling;
pub mod relations;
pub mod training;

pub use error::{Error, Result};
