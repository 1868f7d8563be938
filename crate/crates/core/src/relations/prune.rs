use std::collections::HashMap;

use super::matrix::{Cardinality, RelationMatrix};
use crate::corpus::{Entity, EntityType};

/// A predicted link between two entities of one sentence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRelation {
    pub head: usize,
    pub tail: usize,
    pub score: f64,
}

impl ScoredRelation {
    pub fn key(&self) -> (usize, usize) {
        (self.head.min(self.tail), self.head.max(self.tail))
    }
}

/// Positions `(earlier start, later start)` of the two spans.
fn position(r: &ScoredRelation, entities: &[Entity]) -> (usize, usize) {
    let (a, b) = (entities[r.head].start, entities[r.tail].start);
    (a.min(b), a.max(b))
}

/// Whether `r` may be added given how often each entity already takes part in
/// accepted relations of each pair type.
fn fits(
    r: &ScoredRelation,
    entities: &[Entity],
    matrix: &RelationMatrix,
    used: &HashMap<(usize, EntityType, EntityType), usize>,
) -> bool {
    let (ta, tb) = (entities[r.head].ty, entities[r.tail].ty);
    let pair = (ta.min(tb), ta.max(tb));
    let count = |e: usize| used.get(&(e, pair.0, pair.1)).copied().unwrap_or(0);
    match matrix.cardinality(ta, tb) {
        None => false,
        Some(Cardinality::Unconstrained) => true,
        Some(Cardinality::OneToOne) => count(r.head) == 0 && count(r.tail) == 0,
        Some(Cardinality::OneToMany { one }) => {
            let many = if ta == one { r.tail } else { r.head };
            count(many) == 0
        }
    }
}

/// Greedy uniqueness pruning: relations are visited by descending score (ties
/// by span position) and accepted unless they break a cardinality limit given
/// the ones accepted before. Survivors keep their input order.
pub fn prune_relations(
    relations: &[ScoredRelation],
    entities: &[Entity],
    matrix: &RelationMatrix,
) -> Vec<ScoredRelation> {
    let mut order: Vec<usize> = (0..relations.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&relations[i], &relations[j]);
        b.score
            .total_cmp(&a.score)
            .then_with(|| position(a, entities).cmp(&position(b, entities)))
            .then(i.cmp(&j))
    });
    let mut used: HashMap<(usize, EntityType, EntityType), usize> = HashMap::new();
    let mut keep = vec![false; relations.len()];
    for i in order {
        let r = &relations[i];
        if !fits(r, entities, matrix, &used) {
            continue;
        }
        keep[i] = true;
        let (ta, tb) = (entities[r.head].ty, entities[r.tail].ty);
        let pair = (ta.min(tb), ta.max(tb));
        for e in [r.head, r.tail] {
            *used.entry((e, pair.0, pair.1)).or_default() += 1;
        }
    }
    relations
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| *r)
        .collect()
}

/// Keeps candidates whose score exceeds `alpha`, then prunes them when
/// `filter_overlapping` is set. This is the inference-time decision rule.
pub fn select_relations(
    scored: &[ScoredRelation],
    entities: &[Entity],
    matrix: &RelationMatrix,
    alpha: f64,
    filter_overlapping: bool,
) -> Vec<ScoredRelation> {
    let positive: Vec<ScoredRelation> = scored
        .iter()
        .filter(|r| super::classifier::is_positive(r.score, alpha))
        .copied()
        .collect();
    if filter_overlapping {
        prune_relations(&positive, entities, matrix)
    } else {
        positive
    }
}

/// True when `a` and `b` cannot both be accepted.
pub fn conflicts(a: &ScoredRelation, b: &ScoredRelation, entities: &[Entity], matrix: &RelationMatrix) -> bool {
    if a.key() == b.key() {
        return true;
    }
    let pair = |r: &ScoredRelation| {
        let (x, y) = (entities[r.head].ty, entities[r.tail].ty);
        (x.min(y), x.max(y))
    };
    let p = pair(a);
    if p != pair(b) {
        return false;
    }
    let used = [a.head, a.tail].into_iter().map(|e| ((e, p.0, p.1), 1)).collect();
    !fits(b, entities, matrix, &used)
}
