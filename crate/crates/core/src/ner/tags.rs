//! IOBES tags over the span types and the transition automaton.
//!
//! Index 0 is `O`; span type `k` (in [`EntityType::SPAN_TYPES`] order) owns
//! indices `1 + 4k ..= 4 + 4k` for `B, I, E, S`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::corpus::{Entity, EntityType};
use crate::error::{Error, Result};
use crate::numerics::ChainConstraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prefix {
    B,
    I,
    E,
    S,
    O,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub prefix: Prefix,
    pub ty: EntityType,
}

/// `4(|E| - 1) + 1` with `|E| = 9`.
pub const NUM_TAGS: usize = 4 * (EntityType::ALL.len() - 1) + 1;
pub const O: usize = 0;

impl Tag {
    pub const OUTSIDE: Tag = Tag {
        prefix: Prefix::O,
        ty: EntityType::None,
    };

    pub fn new(prefix: Prefix, ty: EntityType) -> Self {
        Self { prefix, ty }
    }

    pub fn index(self) -> usize {
        match (self.prefix, self.ty.span_index()) {
            (Prefix::O, _) | (_, None) => O,
            (p, Some(k)) => {
                let offset = match p {
                    Prefix::B => 0,
                    Prefix::I => 1,
                    Prefix::E => 2,
                    Prefix::S => 3,
                    Prefix::O => unreachable!(),
                };
                1 + 4 * k + offset
            }
        }
    }

    pub fn from_index(index: usize) -> Tag {
        assert!(index < NUM_TAGS, "tag index {index} out of range");
        if index == O {
            return Tag::OUTSIDE;
        }
        let k = (index - 1) / 4;
        let prefix = [Prefix::B, Prefix::I, Prefix::E, Prefix::S][(index - 1) % 4];
        Tag::new(prefix, EntityType::SPAN_TYPES[k])
    }

    pub fn parse(s: &str) -> Result<Tag> {
        if s == "O" {
            return Ok(Tag::OUTSIDE);
        }
        let (p, ty) = s
            .split_once('-')
            .ok_or_else(|| Error::Data(format!("malformed tag `{s}`")))?;
        let prefix = match p {
            "B" => Prefix::B,
            "I" => Prefix::I,
            "E" => Prefix::E,
            "S" => Prefix::S,
            _ => return Err(Error::Data(format!("malformed tag `{s}`"))),
        };
        let ty: EntityType = ty.parse()?;
        if ty == EntityType::None {
            return Err(Error::Data(format!("tag `{s}` names type none")));
        }
        Ok(Tag::new(prefix, ty))
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prefix {
            Prefix::O => f.write_str("O"),
            p => write!(f, "{p:?}-{}", self.ty),
        }
    }
}

pub fn tag_names() -> Vec<String> {
    (0..NUM_TAGS).map(|i| Tag::from_index(i).to_string()).collect()
}

/// `index<TAB>name` per line, written beside checkpoints.
pub fn dump_tags() -> String {
    tag_names()
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{i}\t{n}\n"))
        .collect()
}

/// Checks a dump against this inventory.
pub fn check_tag_dump(text: &str) -> Result<()> {
    if text != dump_tags() {
        return Err(Error::Data("tag inventory differs from this build".into()));
    }
    Ok(())
}

fn closes(prefix: Prefix) -> bool {
    matches!(prefix, Prefix::O | Prefix::E | Prefix::S)
}

/// The legal IOBES transitions. Sequences start like after `O` and must end
/// on `O`, `E-*` or `S-*`.
pub fn automaton() -> Arc<ChainConstraints> {
    static CELL: OnceLock<Arc<ChainConstraints>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut allowed = vec![false; NUM_TAGS * NUM_TAGS];
        let mut start = vec![false; NUM_TAGS];
        let mut end = vec![false; NUM_TAGS];
        for prev in 0..NUM_TAGS {
            let p = Tag::from_index(prev);
            end[prev] = closes(p.prefix);
            for next in 0..NUM_TAGS {
                let n = Tag::from_index(next);
                allowed[prev * NUM_TAGS + next] = if closes(p.prefix) {
                    matches!(n.prefix, Prefix::O | Prefix::B | Prefix::S)
                } else {
                    matches!(n.prefix, Prefix::I | Prefix::E) && n.ty == p.ty
                };
            }
            start[prev] = matches!(p.prefix, Prefix::O | Prefix::B | Prefix::S);
        }
        Arc::new(ChainConstraints {
            num_tags: NUM_TAGS,
            allowed,
            start,
            end,
        })
    })
    .clone()
}

/// Tags allowed at a step given the previous tag (`None` at the first word),
/// additionally restricted to closing tags at the last word.
pub fn step_mask(prev: Option<usize>, last: bool) -> Vec<bool> {
    let a = automaton();
    (0..NUM_TAGS)
        .map(|t| {
            let ok = match prev {
                None => a.start[t],
                Some(p) => a.is_allowed(p, t),
            };
            ok && (!last || a.end[t])
        })
        .collect()
}

/// Gold tags of `entities` over `len` words.
pub fn entities_to_tags(entities: &[Entity], len: usize) -> Result<Vec<usize>> {
    let mut tags = vec![O; len];
    for e in entities {
        if e.end >= len || e.start > e.end || e.ty == EntityType::None {
            return Err(Error::Data(format!("entity {e:?} does not fit {len} words")));
        }
        if e.start == e.end {
            tags[e.start] = Tag::new(Prefix::S, e.ty).index();
        } else {
            tags[e.start] = Tag::new(Prefix::B, e.ty).index();
            for t in &mut tags[e.start + 1..e.end] {
                *t = Tag::new(Prefix::I, e.ty).index();
            }
            tags[e.end] = Tag::new(Prefix::E, e.ty).index();
        }
    }
    Ok(tags)
}

/// Demotes every tag that is not part of a complete `B I* E` run or an `S` to
/// `O`. Valid sequences come back unchanged.
pub fn repair(tags: &[usize]) -> Vec<usize> {
    let mut out = tags.to_vec();
    let mut open: Option<(usize, EntityType)> = None;
    let demote = |out: &mut Vec<usize>, from: usize, to: usize| {
        for t in &mut out[from..to] {
            *t = O;
        }
    };
    for (j, &t) in tags.iter().enumerate() {
        let tag = Tag::from_index(t);
        match tag.prefix {
            Prefix::O | Prefix::S | Prefix::B => {
                if let Some((s, _)) = open.take() {
                    demote(&mut out, s, j);
                }
                if tag.prefix == Prefix::B {
                    open = Some((j, tag.ty));
                }
            }
            Prefix::I | Prefix::E => match open {
                Some((_, ty)) if ty == tag.ty => {
                    if tag.prefix == Prefix::E {
                        open = None;
                    }
                }
                _ => {
                    if let Some((s, _)) = open.take() {
                        demote(&mut out, s, j);
                    }
                    out[j] = O;
                }
            },
        }
    }
    if let Some((s, _)) = open {
        demote(&mut out, s, tags.len());
    }
    out
}

/// Spans of a valid tag sequence. Invalid pieces are ignored, so callers
/// should [`repair`] untrusted sequences first.
pub fn tags_to_entities(tags: &[usize]) -> Vec<Entity> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, EntityType)> = None;
    for (j, &t) in tags.iter().enumerate() {
        let tag = Tag::from_index(t);
        match tag.prefix {
            Prefix::S => {
                spans.push(Entity::new(j, j, tag.ty));
                open = None;
            }
            Prefix::B => open = Some((j, tag.ty)),
            Prefix::I => {
                if open.is_some_and(|(_, ty)| ty != tag.ty) {
                    open = None;
                }
            }
            Prefix::E => {
                if let Some((s, ty)) = open.take() {
                    if ty == tag.ty {
                        spans.push(Entity::new(s, j, ty));
                    }
                }
            }
            Prefix::O => open = None,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_all(s: &str) -> Vec<usize> {
        s.split(", ").map(|t| Tag::parse(t).unwrap().index()).collect()
    }

    #[test]
    fn thirty_three_tags_round_trip() {
        assert_eq!(NUM_TAGS, 33);
        for i in 0..NUM_TAGS {
            let tag = Tag::from_index(i);
            assert_eq!(tag.index(), i);
            assert_eq!(Tag::parse(&tag.to_string()).unwrap(), tag);
        }
        assert_eq!(Tag::from_index(1).to_string(), "B-kpi");
        assert_eq!(Tag::from_index(32).to_string(), "S-davon-py");
        check_tag_dump(&dump_tags()).unwrap();
    }

    #[test]
    fn automaton_rows() {
        let a = automaton();
        let b_kpi = Tag::parse("B-kpi").unwrap().index();
        let next: Vec<String> = (0..NUM_TAGS)
            .filter(|t| a.is_allowed(b_kpi, *t))
            .map(|t| Tag::from_index(t).to_string())
            .collect();
        assert_eq!(next, ["I-kpi", "E-kpi"]);
        let after_o = (0..NUM_TAGS).filter(|t| a.is_allowed(O, *t)).count();
        assert_eq!(after_o, 1 + 2 * 8);
        let mask = step_mask(Some(O), false);
        for t in 0..NUM_TAGS {
            let p = Tag::from_index(t).prefix;
            assert_eq!(mask[t], !matches!(p, Prefix::I | Prefix::E));
        }
    }

    #[test]
    fn last_word_closes() {
        let b_cy = Tag::parse("B-cy").unwrap().index();
        let m = step_mask(Some(b_cy), true);
        let support: Vec<String> = (0..NUM_TAGS).filter(|t| m[*t]).map(|t| Tag::from_index(t).to_string()).collect();
        assert_eq!(support, ["E-cy"]);
    }

    #[test]
    fn worked_example_spans() {
        let tags = parse_all("O, B-kpi, I-kpi, E-kpi, O, O, O, S-cy, O, O, O, O");
        assert!(automaton().path_is_valid(&tags));
        assert_eq!(
            tags_to_entities(&tags),
            [Entity::new(1, 3, EntityType::Kpi), Entity::new(7, 7, EntityType::Cy)]
        );
        assert_eq!(entities_to_tags(&tags_to_entities(&tags), 12).unwrap(), tags);
        assert_eq!(repair(&tags), tags);
    }

    #[test]
    fn repair_cases() {
        assert_eq!(repair(&parse_all("B-kpi, O")), [O, O]);
        assert_eq!(repair(&parse_all("I-kpi, E-kpi, S-cy")), parse_all("O, O, S-cy"));
        assert_eq!(repair(&parse_all("B-kpi, I-cy, E-cy")), [O, O, O]);
        assert_eq!(repair(&parse_all("B-kpi, B-cy, E-cy")), parse_all("O, B-cy, E-cy"));
        assert!(tags_to_entities(&repair(&parse_all("B-kpi, O"))).is_empty());
    }

    proptest! {
        #[test]
        fn repaired_sequences_are_valid(tags in proptest::collection::vec(0..NUM_TAGS, 1..25)) {
            let fixed = repair(&tags);
            prop_assert!(automaton().path_is_valid(&fixed));
            let spans = tags_to_entities(&fixed);
            prop_assert_eq!(entities_to_tags(&spans, fixed.len()).unwrap(), fixed.clone());
            prop_assert_eq!(repair(&fixed), fixed);
        }
    }
}
