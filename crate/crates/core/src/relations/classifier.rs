use rand::seq::index::sample;
use rand::Rng;

use super::matrix::RelationMatrix;
use crate::corpus::{Entity, Relation};
use crate::error::{Error, Result};
use crate::numerics::{Dropout, NodeId, ParamId, ParamStore, Tape};
use crate::pooling::Pooler;

/// Unordered entity pairs whose types the matrix allows, each as
/// `(earlier, later)` by span position, listed in position order.
pub fn generate_candidates(entities: &[Entity], matrix: &RelationMatrix) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..entities.len()).collect();
    order.sort_by_key(|i| (entities[*i].start, entities[*i].end, *i));
    let mut out = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            let (ei, ej) = (&entities[i], &entities[j]);
            if ei.overlaps(ej) || !matrix.allows(ei.ty, ej.ty) {
                continue;
            }
            out.push((i, j));
        }
    }
    out
}

/// Pooled words strictly between the two spans; a zero vector when they are
/// adjacent.
pub fn localized_context(
    tape: &mut Tape,
    store: &ParamStore,
    pooler: &Pooler,
    words: &[NodeId],
    s1: &Entity,
    s2: &Entity,
) -> Result<NodeId> {
    if s1.overlaps(s2) {
        return Err(Error::Contract(format!("spans {s1:?} and {s2:?} overlap")));
    }
    let (first, second) = if s1.start < s2.start { (s1, s2) } else { (s2, s1) };
    let gap = first.end + 1..second.start;
    if gap.is_empty() {
        return Ok(tape.zeros(pooler.dim));
    }
    pooler.pool(tape, store, &words[gap])
}

/// `sigmoid(w_rel · x_r + b_rel)` with `x_r = [e(s1); c_loc; e(s2)]`.
#[derive(Debug, Clone, Copy)]
pub struct RelationClassifier {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
}

impl RelationClassifier {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, input_dim: usize, rng: &mut R) -> Self {
        Self {
            w: store.add_normal("rel.w", &[1, input_dim], rng),
            b: store.add_normal("rel.b", &[1], rng),
            input_dim,
        }
    }

    /// Pre-sigmoid score of one pair. `e1` must belong to the earlier span.
    pub fn logit(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        e1: NodeId,
        context: NodeId,
        e2: NodeId,
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        let x = tape.concat(&[e1, context, e2]);
        let len = tape.value(x).len();
        if len != self.input_dim {
            return Err(Error::dim("relation input", &[self.input_dim], &[len]));
        }
        let x = dropout.apply(tape, x)?;
        tape.affine(store, self.w, Some(self.b), x)
    }
}

/// Strict threshold: a score equal to `alpha` is negative.
pub fn is_positive(score: f64, alpha: f64) -> bool {
    score > alpha
}

/// Training pairs for one sentence: every gold relation as a positive plus up
/// to `n_rel` allowed non-gold pairs drawn without replacement. Pairs come
/// back in candidate order with their labels.
pub fn training_pairs<R: Rng + ?Sized>(
    entities: &[Entity],
    gold: &[Relation],
    matrix: &RelationMatrix,
    n_rel: usize,
    rng: &mut R,
) -> Vec<((usize, usize), bool)> {
    let gold_keys: std::collections::HashSet<(usize, usize)> = gold.iter().map(Relation::key).collect();
    let candidates = generate_candidates(entities, matrix);
    let key = |(a, b): (usize, usize)| (a.min(b), a.max(b));
    let negatives: Vec<(usize, usize)> = candidates.iter().copied().filter(|c| !gold_keys.contains(&key(*c))).collect();
    let mut chosen = vec![false; negatives.len()];
    if negatives.len() <= n_rel {
        chosen.fill(true);
    } else {
        for i in sample(rng, negatives.len(), n_rel) {
            chosen[i] = true;
        }
    }
    let mut pairs: Vec<((usize, usize), bool)> = Vec::new();
    let mut neg = negatives.iter().zip(&chosen).filter(|(_, c)| **c).map(|(p, _)| *p).peekable();
    for c in candidates {
        if gold_keys.contains(&key(c)) {
            pairs.push((c, true));
        } else if neg.peek() == Some(&c) {
            pairs.push((c, false));
            neg.next();
        }
    }
    // Gold pairs the matrix would not propose still train as positives.
    for r in gold {
        let (a, b) = if entities[r.head].start <= entities[r.tail].start {
            (r.head, r.tail)
        } else {
            (r.tail, r.head)
        };
        if !pairs.iter().any(|(p, _)| key(*p) == key((a, b))) {
            pairs.push(((a, b), true));
        }
    }
    pairs
}

/// Mean binary cross-entropy of scores against labels; 0 for no pairs.
pub fn rel_loss(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("rel_loss", &[scores.len()], &[labels.len()]));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| if *y { -s.ln() } else { -(1.0 - s).ln() })
        .sum();
    Ok(total / scores.len() as f64)
}
