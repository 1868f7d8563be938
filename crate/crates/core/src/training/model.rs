//! The joint model: encoder, three pooling sites, tagger, width embedding and
//! relation scorer over one parameter store.

use std::ops::Range;
use std::path::Path;

use rand::Rng;

use super::config::TrainConfig;
use crate::corpus::{Entity, Sentence, SentenceKey, SubwordSentence, Vocab};
use crate::encoder::{Encoder, EncoderConfig, PrecomputedEncodings, StandInEncoder};
use crate::error::{Error, Result};
use crate::ner::{self, embed_span, Decoder, DecoderKind, WidthEmbedding};
use crate::numerics::rng::{stream, Stream};
use crate::numerics::{Checkpoint, Dropout, NodeId, ParamStore, Tape};
use crate::pooling::Pooler;
use crate::relations::{
    generate_candidates, localized_context, select_relations, training_pairs, PredictedEntity,
    PredictedRelation, RelationClassifier, RelationMatrix, ScoredRelation, SentencePrediction,
};

/// A sentence with everything the model needs precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub key: SentenceKey,
    pub sentence: Sentence,
    pub subwords: SubwordSentence,
    pub gold_tags: Vec<usize>,
}

/// Loss parts of one sentence on a tape.
#[derive(Debug, Clone, Copy)]
pub struct SentenceLoss {
    pub ner: NodeId,
    /// Sum of binary cross-entropies, `None` without relation pairs.
    pub rel: Option<NodeId>,
    pub rel_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct JointModel {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub word_pool: Pooler,
    pub entity_pool: Pooler,
    pub context_pool: Pooler,
    pub decoder: Decoder,
    pub width: WidthEmbedding,
    pub classifier: RelationClassifier,
    pub matrix: RelationMatrix,
}

impl JointModel {
    /// Fresh parameters drawn from the run seed's initialization stream.
    pub fn new(config: TrainConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let encoder = match &config.embeddings {
            Some(path) => Some(Encoder::Precomputed(PrecomputedEncodings::read(path, config.d)?)),
            None => None,
        };
        Self::build(config, vocab, encoder)
    }

    /// Like [`JointModel::new`] but reading token vectors from `encodings`.
    pub fn with_encodings(config: TrainConfig, vocab: Vocab, encodings: PrecomputedEncodings) -> Result<Self> {
        if encodings.dim() != config.d {
            return Err(Error::dim("precomputed embeddings", &[encodings.dim()], &[config.d]));
        }
        Self::build(config, vocab, Some(Encoder::Precomputed(encodings)))
    }

    fn build(config: TrainConfig, vocab: Vocab, encoder: Option<Encoder>) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Stream::Init);
        let mut store = ParamStore::new();
        let d = config.d;
        let encoder = match encoder {
            Some(e) => e,
            None => {
                let ec = EncoderConfig {
                    d,
                    vocab_size: vocab.len(),
                    layers: config.encoder_layers,
                };
                Encoder::StandIn(StandInEncoder::new(&mut store, ec, &mut rng)?)
            }
        };
        let word_pool = Pooler::new(&mut store, "pool.word", config.pooling, d, &mut rng)?;
        let entity_pool = Pooler::new(&mut store, "pool.entity", config.pooling, d, &mut rng)?;
        let context_pool = Pooler::new(&mut store, "pool.context", config.pooling, d, &mut rng)?;
        let decoder = Decoder::new(&mut store, config.decoder, d, config.u, config.masking, &mut rng);
        let width = WidthEmbedding::new(&mut store, config.l, config.v, &mut rng)?;
        let classifier = RelationClassifier::new(&mut store, 3 * d + 2 * config.v, &mut rng);
        let matrix = if config.filter_impossible {
            RelationMatrix::default()
        } else {
            RelationMatrix::permissive()
        };
        Ok(Self {
            config,
            vocab,
            store,
            encoder,
            word_pool,
            entity_pool,
            context_pool,
            decoder,
            width,
            classifier,
            matrix,
        })
    }

    pub fn prepare(&self, key: SentenceKey, sentence: &Sentence) -> Result<Prepared> {
        if sentence.words.is_empty() {
            return Err(Error::Data(format!("sentence {key} has no words")));
        }
        let gold_tags = ner::entities_to_tags(&sentence.entities, sentence.words.len())
            .map_err(|e| Error::Data(format!("sentence {key}: {e}")))?;
        Ok(Prepared {
            key,
            subwords: self.vocab.tokenize_sentence(&sentence.words),
            sentence: sentence.clone(),
            gold_tags,
        })
    }

    /// Word vectors: each word pools its subword (or token) vectors.
    pub fn word_embeddings(&self, tape: &mut Tape, p: &Prepared) -> Result<Vec<NodeId>> {
        let enc = self.encoder.encode(tape, &self.store, &p.key.to_string(), &p.subwords)?;
        let m = p.sentence.words.len();
        let ranges: Vec<Range<usize>> = if enc.t.len() == p.subwords.len() {
            p.subwords.word_boundaries.clone()
        } else if enc.t.len() == m {
            (0..m).map(|i| i..i + 1).collect()
        } else {
            return Err(Error::Alignment(format!(
                "sentence {}: {} token vectors for {} subwords / {m} words",
                p.key,
                enc.t.len(),
                p.subwords.len()
            )));
        };
        ranges
            .into_iter()
            .map(|r| self.word_pool.pool(tape, &self.store, &enc.t[r]))
            .collect()
    }

    /// Teacher-forced tagging loss plus relation losses on gold spans with
    /// sampled negatives.
    pub fn sentence_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &Prepared,
        dropout: &mut Dropout,
        negatives: &mut R,
    ) -> Result<SentenceLoss> {
        let words = self.word_embeddings(tape, p)?;
        let ner = self.decoder.loss(tape, &self.store, &words, &p.gold_tags, dropout)?;
        let ents = &p.sentence.entities;
        let pairs = training_pairs(ents, &p.sentence.relations, &self.matrix, self.config.n_rel, negatives);
        if pairs.is_empty() {
            return Ok(SentenceLoss {
                ner,
                rel: None,
                rel_pairs: 0,
            });
        }
        let mut span_emb: Vec<Option<NodeId>> = vec![None; ents.len()];
        let mut losses = Vec::with_capacity(pairs.len());
        for ((a, b), label) in &pairs {
            for i in [*a, *b] {
                if span_emb[i].is_none() {
                    let s = embed_span(tape, &self.store, &self.entity_pool, &self.width, &words, ents[i])?;
                    span_emb[i] = Some(s.embedding);
                }
            }
            let logit = self.pair_logit(tape, &words, &ents[*a], &ents[*b], span_emb[*a].unwrap(), span_emb[*b].unwrap(), dropout)?;
            losses.push(tape.bce_with_logits(logit, if *label { 1.0 } else { 0.0 })?);
        }
        Ok(SentenceLoss {
            ner,
            rel: Some(tape.add_n(&losses)?),
            rel_pairs: pairs.len(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn pair_logit(
        &self,
        tape: &mut Tape,
        words: &[NodeId],
        s1: &Entity,
        s2: &Entity,
        e1: NodeId,
        e2: NodeId,
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        let (first, second) = if s1.start <= s2.start { (e1, e2) } else { (e2, e1) };
        let ctx = localized_context(tape, &self.store, &self.context_pool, words, s1, s2)?;
        self.classifier.logit(tape, &self.store, first, ctx, second, dropout)
    }

    /// Full inference: tags, spans, scored candidates above `alpha`, pruning.
    pub fn predict(&self, p: &Prepared) -> Result<SentencePrediction> {
        let mut tape = Tape::new();
        let words = self.word_embeddings(&mut tape, p)?;
        let decoded = self.decoder.decode(&mut tape, &self.store, &words)?;
        let spans = ner::assemble_spans(&mut tape, &self.store, &self.entity_pool, &self.width, &decoded.tags, &words)?;
        let entities: Vec<Entity> = spans.iter().map(|s| s.entity).collect();
        let mut scored = Vec::new();
        let mut eval = Dropout::eval();
        for (a, b) in generate_candidates(&entities, &self.matrix) {
            let logit = self.pair_logit(
                &mut tape,
                &words,
                &entities[a],
                &entities[b],
                spans[a].embedding,
                spans[b].embedding,
                &mut eval,
            )?;
            let s = tape.sigmoid(logit);
            scored.push(ScoredRelation {
                head: a,
                tail: b,
                score: tape.value(s).item(),
            });
        }
        let scored = select_relations(
            &scored,
            &entities,
            &self.matrix,
            self.config.alpha,
            self.config.filter_overlapping,
        );
        let entity_score = |e: &Entity| -> Option<f64> {
            if decoded.posteriors.is_empty() {
                return None;
            }
            let total: f64 = (e.start..=e.end).map(|j| decoded.posteriors[j][decoded.tags[j]]).sum();
            Some(total / e.width() as f64)
        };
        Ok(SentencePrediction {
            doc_id: p.key.doc_id.clone(),
            sent: p.key.index,
            entities: entities
                .iter()
                .map(|e| PredictedEntity {
                    start: e.start,
                    end: e.end,
                    ty: e.ty,
                    score: entity_score(e),
                })
                .collect(),
            relations: scored
                .iter()
                .map(|r| PredictedRelation {
                    head_entity: r.head,
                    tail_entity: r.tail,
                    score: r.score,
                })
                .collect(),
        })
    }

    pub fn decoder_kind(&self) -> DecoderKind {
        self.decoder.kind()
    }

    /// Writes `checkpoint.bin`, `config.toml`, `vocab.txt` and `tags.txt`.
    pub fn save(&self, dir: &Path, step: u64) -> Result<()> {
        Checkpoint::from_store(&self.store, self.config.hash(), step).write(&dir.join("checkpoint.bin"))?;
        crate::io::write_atomic(&dir.join("config.toml"), self.config.to_toml().as_bytes())?;
        self.vocab.write(&dir.join("vocab.txt"))?;
        crate::io::write_atomic(&dir.join("tags.txt"), ner::tags::dump_tags().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = TrainConfig::from_toml(&crate::io::read_to_string(&dir.join("config.toml"))?)?;
        let vocab = Vocab::read(&dir.join("vocab.txt"))?;
        ner::tags::check_tag_dump(&crate::io::read_to_string(&dir.join("tags.txt"))?)?;
        let ckpt = Checkpoint::read(&dir.join("checkpoint.bin"))?;
        if ckpt.config_hash != config.hash() {
            return Err(Error::Data(format!(
                "checkpoint was written for config {:016x}, config.toml hashes to {:016x}",
                ckpt.config_hash,
                config.hash()
            )));
        }
        let mut model = Self::new(config, vocab)?;
        ckpt.apply(&mut model.store)?;
        Ok(model)
    }
}
