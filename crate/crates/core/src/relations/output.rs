//! Prediction files: JSON Lines, one sentence per line.
//!
//! ```text
//! {"doc_id":"doc-0003","sent":2,
//!  "entities":[{"start":1,"end":3,"type":"kpi"},{"start":7,"end":7,"type":"cy"}],
//!  "relations":[{"head_entity":0,"tail_entity":1,"score":0.97}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::RelationMatrix;
use crate::corpus::io::{comment_block, content_lines, parse_line};
use crate::corpus::{EntityType, SentenceKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedEntity {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub ty: EntityType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedRelation {
    pub head_entity: usize,
    pub tail_entity: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentencePrediction {
    pub doc_id: String,
    pub sent: usize,
    pub entities: Vec<PredictedEntity>,
    pub relations: Vec<PredictedRelation>,
}

impl SentencePrediction {
    pub fn key(&self) -> SentenceKey {
        SentenceKey {
            doc_id: self.doc_id.clone(),
            index: self.sent,
        }
    }

    /// Field path and message of the first problem, if any.
    pub fn check(&self, matrix: &RelationMatrix) -> std::result::Result<(), (String, String)> {
        for (i, e) in self.entities.iter().enumerate() {
            if e.start > e.end {
                return Err((format!("entities[{i}]"), "start after end".into()));
            }
            if e.ty == EntityType::None {
                return Err((format!("entities[{i}].type"), "type none cannot label a span".into()));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            for (field, idx) in [("head_entity", r.head_entity), ("tail_entity", r.tail_entity)] {
                if idx >= self.entities.len() {
                    return Err((format!("relations[{i}].{field}"), format!("entity index {idx} missing")));
                }
            }
            if r.head_entity == r.tail_entity {
                return Err((format!("relations[{i}]"), "relation links an entity to itself".into()));
            }
            let (a, b) = (self.entities[r.head_entity].ty, self.entities[r.tail_entity].ty);
            if !matrix.allows(a, b) {
                return Err((format!("relations[{i}]"), format!("relation {a}-{b} not allowed")));
            }
            if !(0.0..=1.0).contains(&r.score) {
                return Err((format!("relations[{i}].score"), format!("score {} outside [0, 1]", r.score)));
            }
        }
        Ok(())
    }
}

pub fn predictions_to_string(predictions: &[SentencePrediction], header: &str) -> String {
    let mut out = comment_block(header);
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: &Path, predictions: &[SentencePrediction], header: &str) -> Result<()> {
    crate::io::write_atomic(path, predictions_to_string(predictions, header).as_bytes())
}

/// Parses and checks a prediction file. Relations are checked against the
/// permissive matrix, since runs without type filtering emit any pair.
pub fn parse_predictions(file: &Path, text: &str) -> Result<Vec<SentencePrediction>> {
    let matrix = RelationMatrix::permissive();
    content_lines(text)
        .map(|(line, content)| {
            let p: SentencePrediction = parse_line(file, line, content)?;
            p.check(&matrix).map_err(|(path, message)| Error::Parse {
                file: file.to_path_buf(),
                line,
                path,
                message,
            })?;
            Ok(p)
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<SentencePrediction>> {
    parse_predictions(path, &crate::io::read_to_string(path)?)
}
