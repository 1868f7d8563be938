use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relations::RelationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityType {
    Kpi,
    Cy,
    Py,
    Increase,
    Decrease,
    Davon,
    DavonCy,
    DavonPy,
    None,
}

impl EntityType {
    /// All types including `none`.
    pub const ALL: [EntityType; 9] = [
        EntityType::Kpi,
        EntityType::Cy,
        EntityType::Py,
        EntityType::Increase,
        EntityType::Decrease,
        EntityType::Davon,
        EntityType::DavonCy,
        EntityType::DavonPy,
        EntityType::None,
    ];

    /// Types that can label a span.
    pub const SPAN_TYPES: [EntityType; 8] = [
        EntityType::Kpi,
        EntityType::Cy,
        EntityType::Py,
        EntityType::Increase,
        EntityType::Decrease,
        EntityType::Davon,
        EntityType::DavonCy,
        EntityType::DavonPy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityType::Kpi => "kpi",
            EntityType::Cy => "cy",
            EntityType::Py => "py",
            EntityType::Increase => "increase",
            EntityType::Decrease => "decrease",
            EntityType::Davon => "davon",
            EntityType::DavonCy => "davon-cy",
            EntityType::DavonPy => "davon-py",
            EntityType::None => "none",
        }
    }

    /// Position among [`EntityType::SPAN_TYPES`]; `None` for the none type.
    pub fn span_index(self) -> Option<usize> {
        Self::SPAN_TYPES.iter().position(|t| *t == self)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown entity type {s:?}")))
    }
}

/// Word span `start..=end` with its type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub ty: EntityType,
}

impl Entity {
    pub fn new(start: usize, end: usize, ty: EntityType) -> Self {
        Self { start, end, ty }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Unordered link between two entities of one sentence, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub head: usize,
    pub tail: usize,
}

impl Relation {
    pub fn new(head: usize, tail: usize) -> Self {
        Self { head, tail }
    }

    /// `(min, max)` of the two indices.
    pub fn key(&self) -> (usize, usize) {
        (self.head.min(self.tail), self.head.max(self.tail))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub words: Vec<String>,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl Sentence {
    pub fn new(words: Vec<String>) -> Self {
        Self {
            words,
            ..Self::default()
        }
    }

    /// Checks spans and relations against the sentence and the relation matrix.
    /// Errors carry a field path such as `entities[2]`.
    pub fn validate(&self, matrix: &RelationMatrix) -> std::result::Result<(), (String, String)> {
        let n = self.words.len();
        for (i, e) in self.entities.iter().enumerate() {
            let path = format!("entities[{i}]");
            if e.ty == EntityType::None {
                return Err((path, "entity type `none` cannot label a span".into()));
            }
            if e.start > e.end {
                return Err((path, format!("start {} after end {}", e.start, e.end)));
            }
            if e.end >= n {
                return Err((path, format!("end {} beyond sentence of {n} words", e.end)));
            }
            for (j, other) in self.entities.iter().enumerate().take(i) {
                if e.overlaps(other) {
                    return Err((path, format!("overlaps entities[{j}]")));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, r) in self.relations.iter().enumerate() {
            let path = format!("relations[{i}]");
            for (field, idx) in [("head", r.head), ("tail", r.tail)] {
                if idx >= self.entities.len() {
                    return Err((
                        format!("{path}.{field}"),
                        format!("entity index {idx} missing ({} entities)", self.entities.len()),
                    ));
                }
            }
            if r.head == r.tail {
                return Err((path, "relation links an entity to itself".into()));
            }
            if !seen.insert(r.key()) {
                return Err((path, "duplicate relation".into()));
            }
            let (a, b) = (self.entities[r.head].ty, self.entities[r.tail].ty);
            if !matrix.allows(a, b) {
                return Err((path, format!("relation {a}-{b} not allowed")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

/// Identifies a sentence by its document and position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub doc_id: String,
    pub index: usize,
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.index)
    }
}

impl Document {
    pub fn keyed(&self) -> impl Iterator<Item = (SentenceKey, &Sentence)> {
        self.sentences.iter().enumerate().map(|(i, s)| {
            (
                SentenceKey {
                    doc_id: self.id.clone(),
                    index: i,
                },
                s,
            )
        })
    }
}
