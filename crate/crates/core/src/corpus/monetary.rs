//! Rule-based detection of monetary numbers with their scale and unit.

use serde::{Deserialize, Serialize};

use super::types::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    None,
    Thousand,
    Million,
    Billion,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::None => 1.0,
            Scale::Thousand => 1e3,
            Scale::Million => 1e6,
            Scale::Billion => 1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    None,
    Euro,
    Dollar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleWord {
    pub word: String,
    pub scale: Scale,
    /// Unit implied by the word itself (`TEUR` means thousands of euros).
    pub implied_unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitWord {
    pub word: String,
    pub unit: Unit,
}

/// Lexicon driving [`tag_monetary_numbers`]. Versioned so the rule table can
/// change without touching code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonetaryRules {
    pub version: u32,
    pub scales: Vec<ScaleWord>,
    pub units: Vec<UnitWord>,
}

impl Default for MonetaryRules {
    fn default() -> Self {
        let scale = |w: &str, scale, implied_unit| ScaleWord {
            word: w.into(),
            scale,
            implied_unit,
        };
        let unit = |w: &str, unit| UnitWord {
            word: w.into(),
            unit,
        };
        Self {
            version: 1,
            scales: vec![
                scale("TEUR", Scale::Thousand, Unit::Euro),
                scale("T€", Scale::Thousand, Unit::Euro),
                scale("Tsd", Scale::Thousand, Unit::None),
                scale("Mio", Scale::Million, Unit::None),
                scale("Millionen", Scale::Million, Unit::None),
                scale("million", Scale::Million, Unit::None),
                scale("Mrd", Scale::Billion, Unit::None),
                scale("Milliarden", Scale::Billion, Unit::None),
                scale("billion", Scale::Billion, Unit::None),
            ],
            units: vec![
                unit("€", Unit::Euro),
                unit("EUR", Unit::Euro),
                unit("Euro", Unit::Euro),
                unit("$", Unit::Dollar),
                unit("USD", Unit::Dollar),
            ],
        }
    }
}

impl MonetaryRules {
    fn scale_of(&self, word: &str) -> Option<&ScaleWord> {
        self.scales.iter().find(|s| s.word == word)
    }

    fn unit_of(&self, word: &str) -> Option<Unit> {
        self.units.iter().find(|u| u.word == word).map(|u| u.unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonetaryTag {
    pub word: usize,
    pub scale: Scale,
    pub unit: Unit,
}

/// Digits with optional `.`/`,` separators, starting and ending with a digit.
pub fn is_number(word: &str) -> bool {
    let b = word.as_bytes();
    !b.is_empty()
        && b[0].is_ascii_digit()
        && b[b.len() - 1].is_ascii_digit()
        && b.iter().all(|c| c.is_ascii_digit() || *c == b'.' || *c == b',')
}

/// Annotates each number that has a scale or unit word right before it, or a
/// scale and/or unit right after it (an abbreviation dot in between is skipped).
/// Numbers without such neighbours, such as years, stay unannotated.
pub fn tag_monetary_numbers(words: &[String], rules: &MonetaryRules) -> Vec<MonetaryTag> {
    let mut tags = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if !is_number(w) {
            continue;
        }
        let mut scale = Scale::None;
        let mut unit = Unit::None;

        if let Some(prev) = i.checked_sub(1).map(|p| words[p].as_str()) {
            if let Some(s) = rules.scale_of(prev) {
                scale = s.scale;
                unit = s.implied_unit;
            } else if let Some(u) = rules.unit_of(prev) {
                unit = u;
            }
        }

        let following: Vec<&str> = words[i + 1..]
            .iter()
            .map(String::as_str)
            .filter(|w| *w != ".")
            .take(2)
            .collect();
        if let Some(first) = following.first() {
            if let Some(s) = rules.scale_of(first) {
                scale = s.scale;
                if s.implied_unit != Unit::None {
                    unit = s.implied_unit;
                }
                if let Some(u) = following.get(1).and_then(|w| rules.unit_of(w)) {
                    unit = u;
                }
            } else if let Some(u) = rules.unit_of(first) {
                unit = u;
            }
        }

        if scale != Scale::None || unit != Unit::None {
            tags.push(MonetaryTag {
                word: i,
                scale,
                unit,
            });
        }
    }
    tags
}

/// Keeps only sentences containing at least one monetary number.
pub fn filter_sentences(document: Document, rules: &MonetaryRules) -> Document {
    let sentences = document
        .sentences
        .into_iter()
        .filter(|s| !tag_monetary_numbers(&s.words, rules).is_empty())
        .collect();
    Document {
        id: document.id,
        sentences,
    }
}
