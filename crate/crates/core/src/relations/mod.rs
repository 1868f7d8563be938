//! Relation extraction between predicted spans: the allowed-pair matrix,
//! candidate generation, localized context, the sigmoid scorer and greedy
//! uniqueness pruning.

pub mod classifier;
pub mod matrix;
pub mod output;
pub mod prune;

pub use classifier::{generate_candidates, is_positive, localized_context, rel_loss, training_pairs, RelationClassifier};
pub use matrix::{Cardinality, RelationMatrix};
pub use output::{read_predictions, write_predictions, PredictedEntity, PredictedRelation, SentencePrediction};
pub use prune::{conflicts, prune_relations, select_relations, ScoredRelation};
