use rand::Rng;

use super::tags::{repair, tags_to_entities};
use crate::corpus::Entity;
use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape};
use crate::pooling::Pooler;

/// Learned width prior: row `min(k, l) - 1` of an `l × v` table for a span of
/// `k` words.
#[derive(Debug, Clone, Copy)]
pub struct WidthEmbedding {
    pub table: ParamId,
    pub max_width: usize,
    pub dim: usize,
}

impl WidthEmbedding {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, max_width: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if max_width == 0 {
            return Err(Error::Config("maximum span width must be positive".into()));
        }
        Ok(Self {
            table: store.add_normal("ner.width_embedding", &[max_width, dim], rng),
            max_width,
            dim,
        })
    }

    pub fn lookup(&self, tape: &mut Tape, store: &ParamStore, width: usize) -> Result<NodeId> {
        if width == 0 {
            return Err(Error::Contract("span width 0".into()));
        }
        tape.row(store, self.table, width.min(self.max_width) - 1)
    }
}

/// A span with its representation `[pool(e_start..=e_end); W_width(k)]`.
#[derive(Debug, Clone, Copy)]
pub struct EntitySpan {
    pub entity: Entity,
    pub embedding: NodeId,
}

pub fn embed_span(
    tape: &mut Tape,
    store: &ParamStore,
    pooler: &Pooler,
    width: &WidthEmbedding,
    words: &[NodeId],
    entity: Entity,
) -> Result<EntitySpan> {
    if entity.end >= words.len() || entity.start > entity.end {
        return Err(Error::Contract(format!("span {entity:?} outside {} words", words.len())));
    }
    let pooled = pooler.pool(tape, store, &words[entity.start..=entity.end])?;
    let w = width.lookup(tape, store, entity.width())?;
    Ok(EntitySpan {
        entity,
        embedding: tape.concat(&[pooled, w]),
    })
}

/// Repairs `tags`, reads off the spans and embeds each one.
pub fn assemble_spans(
    tape: &mut Tape,
    store: &ParamStore,
    pooler: &Pooler,
    width: &WidthEmbedding,
    tags: &[usize],
    words: &[NodeId],
) -> Result<Vec<EntitySpan>> {
    if tags.len() != words.len() {
        return Err(Error::dim("assemble_spans", &[tags.len()], &[words.len()]));
    }
    tags_to_entities(&repair(tags))
        .into_iter()
        .map(|e| embed_span(tape, store, pooler, width, words, e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType;
    use crate::ner::tags::Tag;
    use crate::numerics::rng::{stream, Stream};
    use crate::numerics::Tensor;
    use crate::pooling::PoolingKind;

    fn setup(d: usize, v: usize) -> (ParamStore, Pooler, WidthEmbedding) {
        let mut store = ParamStore::new();
        let mut rng = stream(0, Stream::Init);
        let pooler = Pooler::new(&mut store, "entity_pool", PoolingKind::Bigru, d, &mut rng).unwrap();
        let width = WidthEmbedding::new(&mut store, 30, v, &mut rng).unwrap();
        (store, pooler, width)
    }

    #[test]
    fn worked_example_and_dimensions() {
        let (store, pooler, width) = setup(768, 25);
        let tags: Vec<usize> = "O B-kpi I-kpi E-kpi O O O S-cy O O O O"
            .split(' ')
            .map(|t| Tag::parse(t).unwrap().index())
            .collect();
        let mut tape = Tape::new();
        let words: Vec<NodeId> = (0..12).map(|_| tape.constant(Tensor::vector(vec![0.01; 768]))).collect();
        let spans = assemble_spans(&mut tape, &store, &pooler, &width, &tags, &words).unwrap();
        let ents: Vec<Entity> = spans.iter().map(|s| s.entity).collect();
        assert_eq!(ents, [Entity::new(1, 3, EntityType::Kpi), Entity::new(7, 7, EntityType::Cy)]);
        for s in spans {
            assert_eq!(tape.value(s.embedding).len(), 793);
        }
    }

    #[test]
    fn width_is_clamped() {
        let (store, _, width) = setup(4, 3);
        let mut tape = Tape::new();
        let a = width.lookup(&mut tape, &store, 30).unwrap();
        let b = width.lookup(&mut tape, &store, 45).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        let c = width.lookup(&mut tape, &store, 1).unwrap();
        assert_ne!(tape.value(a), tape.value(c));
    }

    #[test]
    fn all_outside_no_spans() {
        let (store, pooler, width) = setup(4, 3);
        let mut tape = Tape::new();
        let words: Vec<NodeId> = (0..3).map(|_| tape.constant(Tensor::vector(vec![0.0; 4]))).collect();
        assert!(assemble_spans(&mut tape, &store, &pooler, &width, &[0, 0, 0], &words)
            .unwrap()
            .is_empty());
    }
}
