//! Annotation files: JSON Lines, one sentence per line.
//!
//! ```text
//! {"doc_id":"doc-0000","sent":0,"words":["Umsatz","100","Mio","€"],
//!  "entities":[{"start":0,"end":0,"type":"kpi"},{"start":1,"end":1,"type":"cy"}],
//!  "relations":[{"head":0,"tail":1}]}
//! ```
//!
//! Lines starting with `#` are comments (writers put the effective config
//! there). Consecutive lines sharing a `doc_id` form one document and `sent`
//! must count up from 0 within it. Documents without sentences are not
//! representable and vanish on a round trip.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Document, Entity, Relation, Sentence};
use crate::error::{Error, Result};
use crate::relations::RelationMatrix;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    doc_id: String,
    sent: usize,
    words: Vec<String>,
    #[serde(default)]
    entities: Vec<Entity>,
    #[serde(default)]
    relations: Vec<Relation>,
}

/// Prefixes every line of `header` with `# `.
pub fn comment_block(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

/// Parses one JSON line into `T`, reporting the failing field path.
pub(crate) fn parse_line<T: for<'de> Deserialize<'de>>(file: &Path, line: usize, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        file: file.to_path_buf(),
        line,
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Content lines of a JSON Lines file as `(1-based line number, text)`.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_annotations(file: &Path, text: &str) -> Result<Vec<Document>> {
    let matrix = RelationMatrix::default();
    let mut docs: Vec<Document> = Vec::new();
    for (line, content) in content_lines(text) {
        let rec: Record = parse_line(file, line, content)?;
        let err = |path: &str, message: String| Error::Parse {
            file: file.to_path_buf(),
            line,
            path: path.to_string(),
            message,
        };
        let continues = docs.last().is_some_and(|d| d.id == rec.doc_id);
        if !continues && docs.iter().any(|d| d.id == rec.doc_id) {
            return Err(err("doc_id", format!("document {} is not contiguous", rec.doc_id)));
        }
        if !continues {
            docs.push(Document {
                id: rec.doc_id.clone(),
                sentences: Vec::new(),
            });
        }
        let doc = docs.last_mut().expect("just pushed");
        if rec.sent != doc.sentences.len() {
            return Err(err("sent", format!("expected sentence {}, got {}", doc.sentences.len(), rec.sent)));
        }
        let sentence = Sentence {
            words: rec.words,
            entities: rec.entities,
            relations: rec.relations,
        };
        sentence.validate(&matrix).map_err(|(path, message)| err(&path, message))?;
        doc.sentences.push(sentence);
    }
    Ok(docs)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Document>> {
    parse_annotations(path, &crate::io::read_to_string(path)?)
}

pub fn annotations_to_string(documents: &[Document], header: &str) -> String {
    let mut out = comment_block(header);
    for doc in documents {
        for (i, s) in doc.sentences.iter().enumerate() {
            let rec = Record {
                doc_id: doc.id.clone(),
                sent: i,
                words: s.words.clone(),
                entities: s.entities.clone(),
                relations: s.relations.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Writes atomically; `header` lines become `#` comments.
pub fn write_annotations(path: &Path, documents: &[Document], header: &str) -> Result<()> {
    crate::io::write_atomic(path, annotations_to_string(documents, header).as_bytes())
}
