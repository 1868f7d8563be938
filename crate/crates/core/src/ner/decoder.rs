//! Sequence taggers over word embeddings: the recurrent tagger with
//! conditional label masking, a per-word linear classifier and a linear-chain
//! CRF with Viterbi decoding.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tags::{automaton, repair, step_mask, Tag, NUM_TAGS, O};
use crate::error::{Error, Result};
use crate::numerics::lattice::ChainScores;
use crate::numerics::{ChainConstraints, Dropout, GruCell, NodeId, ParamId, ParamStore, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Linear,
    CrfLm,
    GruLm,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::GruLm, DecoderKind::CrfLm, DecoderKind::Linear];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Linear => "linear",
            DecoderKind::CrfLm => "crf_lm",
            DecoderKind::GruLm => "gru_lm",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decoder `{s}` (gru_lm, crf_lm, linear)")))
    }
}

/// Predicted tags plus, for the softmax decoders, the per-word posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tags: Vec<usize>,
    pub posteriors: Vec<Vec<f64>>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn mean_loss(tape: &mut Tape, losses: &[NodeId]) -> Result<NodeId> {
    let total = tape.add_n(losses)?;
    Ok(tape.scale(total, 1.0 / losses.len() as f64))
}

fn check_len(words: &[NodeId], gold: Option<&[usize]>) -> Result<()> {
    if words.is_empty() {
        return Err(Error::Contract("cannot tag an empty sentence".into()));
    }
    if let Some(g) = gold {
        if g.len() != words.len() {
            return Err(Error::dim("gold tags", &[words.len()], &[g.len()]));
        }
    }
    Ok(())
}

/// Recurrent tagger. Step `j` reads `z_j = [e_j; W_label[tag_{j-1}]]` (the `O`
/// embedding at `j = 0`), updates `h_j = GRU(z_j, h_{j-1})` from a zero state
/// and scores `softmax(mask(W_seq h_j + b_seq))`, where the mask keeps only
/// tags the automaton allows after the previous tag.
#[derive(Debug, Clone)]
pub struct GruLm {
    pub label: ParamId,
    pub cell: GruCell,
    pub w_seq: ParamId,
    pub b_seq: ParamId,
    pub masking: bool,
}

impl GruLm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, d: usize, u: usize, masking: bool, rng: &mut R) -> Self {
        Self {
            label: store.add_normal("ner.label_embedding", &[NUM_TAGS, u], rng),
            cell: GruCell::new(store, "ner.gru", d + u, d, rng),
            w_seq: store.add_normal("ner.w_seq", &[NUM_TAGS, d], rng),
            b_seq: store.add_normal("ner.b_seq", &[NUM_TAGS], rng),
            masking,
        }
    }

    fn mask(&self, prev: Option<usize>, last: bool) -> Vec<bool> {
        if self.masking {
            step_mask(prev, last)
        } else {
            vec![true; NUM_TAGS]
        }
    }

    /// Runs the recurrence. With `gold` the history is the gold tags; without,
    /// it is the model's own argmax.
    fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        gold: Option<&[usize]>,
        dropout: &mut Dropout,
    ) -> Result<(Vec<usize>, Vec<NodeId>)> {
        check_len(words, gold)?;
        let m = words.len();
        let mut h = tape.zeros(self.cell.hidden_dim);
        let mut prev: Option<usize> = None;
        let mut tags = Vec::with_capacity(m);
        let mut probs = Vec::with_capacity(m);
        for (j, e) in words.iter().enumerate() {
            let label = tape.row(store, self.label, prev.unwrap_or(O))?;
            let z = tape.concat(&[*e, label]);
            h = self.cell.step(tape, store, z, h)?;
            let hd = dropout.apply(tape, h)?;
            let logits = tape.affine(store, self.w_seq, Some(self.b_seq), hd)?;
            let mask = self.mask(prev, j + 1 == m);
            let p = tape.masked_softmax(logits, &mask)?;
            let tag = match gold {
                Some(g) => {
                    if !mask[g[j]] {
                        return Err(Error::Data(format!(
                            "gold tag {} at word {j} not allowed after {}",
                            Tag::from_index(g[j]),
                            prev.map_or("<start>".to_string(), |p| Tag::from_index(p).to_string())
                        )));
                    }
                    g[j]
                }
                None => argmax(tape.value(p).data()),
            };
            tags.push(tag);
            probs.push(p);
            prev = Some(tag);
        }
        Ok((tags, probs))
    }

    /// Teacher-forced posteriors and the mean per-word cross-entropy.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        gold: &[usize],
        dropout: &mut Dropout,
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let (_, probs) = self.run(tape, store, words, Some(gold), dropout)?;
        let losses = probs
            .iter()
            .zip(gold)
            .map(|(p, g)| tape.neg_log_at(*p, *g))
            .collect::<Result<Vec<_>>>()?;
        let loss = mean_loss(tape, &losses)?;
        Ok((probs, loss))
    }

    pub fn greedy(&self, tape: &mut Tape, store: &ParamStore, words: &[NodeId]) -> Result<Decoded> {
        let (tags, probs) = self.run(tape, store, words, None, &mut Dropout::eval())?;
        let posteriors = probs.iter().map(|p| tape.value(*p).data().to_vec()).collect();
        let tags = if self.masking { tags } else { repair(&tags) };
        Ok(Decoded { tags, posteriors })
    }
}

/// Independent softmax over all tags for every word.
#[derive(Debug, Clone)]
pub struct LinearTagger {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearTagger {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, d: usize, rng: &mut R) -> Self {
        Self {
            w: store.add_normal("ner.linear.w", &[NUM_TAGS, d], rng),
            b: store.add_normal("ner.linear.b", &[NUM_TAGS], rng),
        }
    }

    pub fn posteriors(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        dropout: &mut Dropout,
    ) -> Result<Vec<NodeId>> {
        check_len(words, None)?;
        let all = [true; NUM_TAGS];
        words
            .iter()
            .map(|e| {
                let x = dropout.apply(tape, *e)?;
                let logits = tape.affine(store, self.w, Some(self.b), x)?;
                tape.masked_softmax(logits, &all)
            })
            .collect()
    }

    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        gold: &[usize],
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        check_len(words, Some(gold))?;
        let probs = self.posteriors(tape, store, words, dropout)?;
        let losses = probs
            .iter()
            .zip(gold)
            .map(|(p, g)| tape.neg_log_at(*p, *g))
            .collect::<Result<Vec<_>>>()?;
        mean_loss(tape, &losses)
    }

    /// Per-word argmax, then [`repair`].
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, words: &[NodeId]) -> Result<Decoded> {
        let probs = self.posteriors(tape, store, words, &mut Dropout::eval())?;
        let posteriors: Vec<Vec<f64>> = probs.iter().map(|p| tape.value(*p).data().to_vec()).collect();
        let raw: Vec<usize> = posteriors.iter().map(|p| argmax(p)).collect();
        Ok(Decoded {
            tags: repair(&raw),
            posteriors,
        })
    }
}

/// Linear-chain CRF: affine emissions plus trainable transition, start and end
/// scores. Transitions the constraints forbid score `-inf`.
#[derive(Debug, Clone)]
pub struct CrfTagger {
    pub w: ParamId,
    pub b: ParamId,
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
    pub constraints: Arc<ChainConstraints>,
}

impl CrfTagger {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, d: usize, masking: bool, rng: &mut R) -> Self {
        Self {
            w: store.add_normal("ner.crf.w", &[NUM_TAGS, d], rng),
            b: store.add_normal("ner.crf.b", &[NUM_TAGS], rng),
            transitions: store.add_normal("ner.crf.transitions", &[NUM_TAGS, NUM_TAGS], rng),
            start: store.add_normal("ner.crf.start", &[NUM_TAGS], rng),
            end: store.add_normal("ner.crf.end", &[NUM_TAGS], rng),
            constraints: if masking {
                automaton()
            } else {
                Arc::new(ChainConstraints::unconstrained(NUM_TAGS))
            },
        }
    }

    fn emissions(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        let rows = words
            .iter()
            .map(|e| {
                let x = dropout.apply(tape, *e)?;
                tape.affine(store, self.w, Some(self.b), x)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.stack(&rows)
    }

    /// Sequence negative log-likelihood `log Z - score(gold)`, divided by the
    /// sentence length.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        gold: &[usize],
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        check_len(words, Some(gold))?;
        if !self.constraints.path_is_valid(gold) {
            return Err(Error::Data("gold tags violate the tag automaton".into()));
        }
        let em = self.emissions(tape, store, words, dropout)?;
        let log_z = tape.chain_log_partition(
            store,
            em,
            self.transitions,
            self.start,
            self.end,
            self.constraints.clone(),
        )?;
        let mut terms = vec![
            tape.param_at(store, self.start, gold[0]),
            tape.param_at(store, self.end, gold[gold.len() - 1]),
        ];
        for (j, g) in gold.iter().enumerate() {
            terms.push(tape.at(em, j * NUM_TAGS + g));
            if j > 0 {
                terms.push(tape.param_at(store, self.transitions, gold[j - 1] * NUM_TAGS + g));
            }
        }
        let score = tape.add_n(&terms)?;
        let nll = tape.sub(log_z, score)?;
        Ok(tape.scale(nll, 1.0 / words.len() as f64))
    }

    /// Exact best path under the constraints.
    pub fn viterbi(&self, tape: &mut Tape, store: &ParamStore, words: &[NodeId]) -> Result<Decoded> {
        check_len(words, None)?;
        let em = self.emissions(tape, store, words, &mut Dropout::eval())?;
        let scores = ChainScores {
            emissions: tape.value(em).data(),
            len: words.len(),
            transitions: store.value(self.transitions).data(),
            start: store.value(self.start).data(),
            end: store.value(self.end).data(),
            constraints: &self.constraints,
        };
        let (path, _) = scores.viterbi();
        Ok(Decoded {
            tags: repair(&path),
            posteriors: Vec::new(),
        })
    }
}

/// The configured tagger.
#[derive(Debug, Clone)]
pub enum Decoder {
    GruLm(GruLm),
    Linear(LinearTagger),
    Crf(CrfTagger),
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: DecoderKind,
        d: usize,
        u: usize,
        masking: bool,
        rng: &mut R,
    ) -> Self {
        match kind {
            DecoderKind::GruLm => Decoder::GruLm(GruLm::new(store, d, u, masking, rng)),
            DecoderKind::Linear => Decoder::Linear(LinearTagger::new(store, d, rng)),
            DecoderKind::CrfLm => Decoder::Crf(CrfTagger::new(store, d, masking, rng)),
        }
    }

    pub fn kind(&self) -> DecoderKind {
        match self {
            Decoder::GruLm(_) => DecoderKind::GruLm,
            Decoder::Linear(_) => DecoderKind::Linear,
            Decoder::Crf(_) => DecoderKind::CrfLm,
        }
    }

    /// Training loss of one sentence, averaged over its words.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        gold: &[usize],
        dropout: &mut Dropout,
    ) -> Result<NodeId> {
        match self {
            Decoder::GruLm(g) => Ok(g.teacher_forced(tape, store, words, gold, dropout)?.1),
            Decoder::Linear(l) => l.loss(tape, store, words, gold, dropout),
            Decoder::Crf(c) => c.loss(tape, store, words, gold, dropout),
        }
    }

    /// Inference; the returned tags always satisfy the automaton.
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, words: &[NodeId]) -> Result<Decoded> {
        match self {
            Decoder::GruLm(g) => g.greedy(tape, store, words),
            Decoder::Linear(l) => l.decode(tape, store, words),
            Decoder::Crf(c) => c.viterbi(tape, store, words),
        }
    }
}

/// Mean cross-entropy of posterior rows against gold tags.
pub fn ner_loss(posteriors: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if posteriors.len() != gold.len() || gold.is_empty() {
        return Err(Error::dim("ner_loss", &[posteriors.len()], &[gold.len()]));
    }
    let total: f64 = posteriors.iter().zip(gold).map(|(p, g)| -p[*g].ln()).sum();
    Ok(total / gold.len() as f64)
}
