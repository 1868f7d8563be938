//! IOBES tagging: tag inventory and automaton, the three taggers, and span
//! assembly with width embeddings.

pub mod decoder;
pub mod spans;
pub mod tags;

pub use decoder::{ner_loss, CrfTagger, Decoded, Decoder, DecoderKind, GruLm, LinearTagger};
pub use spans::{assemble_spans, embed_span, EntitySpan, WidthEmbedding};
pub use tags::{automaton, entities_to_tags, repair, step_mask, tags_to_entities, Prefix, Tag, NUM_TAGS};
