//! Sentence encoders producing a context vector `c` and one vector per subword.
//!
//! [`StandInEncoder`] is trainable: a subword embedding table followed by
//! stacked bidirectional GRU layers, each direction of width `d/2`; `c` is the
//! concatenation of the last layer's final forward and backward states.
//! [`PrecomputedEncodings`] serves frozen vectors read from a file written by
//! an external encoder.

mod precomputed;

pub use precomputed::PrecomputedEncodings;

use rand::Rng;

use crate::corpus::SubwordSentence;
use crate::error::{Error, Result};
use crate::numerics::{BiGru, NodeId, ParamId, ParamStore, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d: usize,
    pub vocab_size: usize,
    pub layers: usize,
}

/// Encoder output as concrete values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub c: Tensor,
    pub t: Vec<Tensor>,
}

impl EncodedSentence {
    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Encoder output as tape nodes.
#[derive(Debug, Clone)]
pub struct EncodedNodes {
    pub c: NodeId,
    pub t: Vec<NodeId>,
}

impl EncodedNodes {
    pub fn values(&self, tape: &Tape) -> EncodedSentence {
        EncodedSentence {
            c: tape.value(self.c).clone(),
            t: self.t.iter().map(|n| tape.value(*n).clone()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StandInEncoder {
    pub config: EncoderConfig,
    pub embedding: ParamId,
    layers: Vec<BiGru>,
}

impl StandInEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        if config.d == 0 || !config.d.is_multiple_of(2) {
            return Err(Error::Config(format!("encoder dimension must be even and positive, got {}", config.d)));
        }
        if config.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        let embedding = store.add_normal("encoder.embedding", &[config.vocab_size, config.d], rng);
        let layers = (0..config.layers)
            .map(|l| BiGru::new(store, &format!("encoder.layer{l}"), config.d, config.d / 2, rng))
            .collect();
        Ok(Self {
            config,
            embedding,
            layers,
        })
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, ids: &[u32]) -> Result<EncodedNodes> {
        if ids.is_empty() {
            return Err(Error::Contract("cannot encode an empty sentence".into()));
        }
        let mut xs = ids
            .iter()
            .map(|id| tape.row(store, self.embedding, *id as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut c = None;
        for layer in &self.layers {
            let (states, last_f, last_b) = layer.run(tape, store, &xs)?;
            xs = states;
            c = Some((last_f, last_b));
        }
        // Outputs are layer-normalized so downstream heads see unit-scale
        // features regardless of how small the recurrent states still are.
        let (f, b) = c.expect("at least one layer");
        let c = tape.concat(&[f, b]);
        Ok(EncodedNodes {
            c: tape.normalize(c),
            t: xs.into_iter().map(|x| tape.normalize(x)).collect(),
        })
    }
}

/// Either encoder behind one call.
#[derive(Debug, Clone)]
pub enum Encoder {
    StandIn(StandInEncoder),
    Precomputed(PrecomputedEncodings),
}

impl Encoder {
    pub fn dim(&self) -> usize {
        match self {
            Encoder::StandIn(e) => e.config.d,
            Encoder::Precomputed(p) => p.dim(),
        }
    }

    /// Encodes one sentence. `key` names the sentence in a precomputed file;
    /// the stand-in encoder ignores it.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        key: &str,
        subwords: &SubwordSentence,
    ) -> Result<EncodedNodes> {
        match self {
            Encoder::StandIn(e) => e.encode(tape, store, &subwords.ids),
            Encoder::Precomputed(p) => p.feed(tape, key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck;
    use crate::numerics::rng::{stream, Stream};

    fn encoder(d: usize) -> (ParamStore, StandInEncoder) {
        let mut store = ParamStore::new();
        let mut rng = stream(4, Stream::Init);
        let cfg = EncoderConfig {
            d,
            vocab_size: 10,
            layers: 2,
        };
        let e = StandInEncoder::new(&mut store, cfg, &mut rng).unwrap();
        (store, e)
    }

    fn run(store: &ParamStore, e: &StandInEncoder, ids: &[u32]) -> EncodedSentence {
        let mut tape = Tape::new();
        e.encode(&mut tape, store, ids).unwrap().values(&tape)
    }

    #[test]
    fn single_subword() {
        let (store, e) = encoder(6);
        let out = run(&store, &e, &[3]);
        assert_eq!(out.t.len(), 1);
        assert_eq!(out.c.len(), 6);
        assert!(out.c.is_finite());
    }

    #[test]
    fn per_sentence_and_deterministic() {
        let (store, e) = encoder(4);
        let a = run(&store, &e, &[1, 2, 3]);
        let _ = run(&store, &e, &[4, 5]);
        assert_eq!(run(&store, &e, &[1, 2, 3]), a);
        let (store2, e2) = encoder(4);
        assert_eq!(run(&store2, &e2, &[1, 2, 3]), a);
    }

    #[test]
    fn empty_and_odd_rejected() {
        let (store, e) = encoder(4);
        let mut tape = Tape::new();
        assert!(matches!(e.encode(&mut tape, &store, &[]), Err(Error::Contract(_))));
        let mut s = ParamStore::new();
        let cfg = EncoderConfig {
            d: 5,
            vocab_size: 3,
            layers: 1,
        };
        assert!(StandInEncoder::new(&mut s, cfg, &mut stream(0, Stream::Init)).is_err());
    }

    #[test]
    fn gradients_reach_embedding_table() {
        let (mut store, e) = encoder(4);
        let mut rng = stream(9, Stream::Init);
        let report = gradcheck::check(&mut store, 1e-6, 16, &mut rng, |tape, store| {
            let enc = e.encode(tape, store, &[1, 2, 1])?;
            let mut parts = enc.t.clone();
            parts.push(enc.c);
            let all = tape.concat(&parts);
            // normalized outputs have a fixed norm, so project instead of squaring
            let n = tape.value(all).len();
            let w = tape.constant(Tensor::vector((0..n).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect()));
            let proj = tape.mul(all, w)?;
            let squashed = tape.tanh(proj);
            Ok(tape.sum(squashed))
        })
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
        let g = store.grad(e.embedding);
        assert!(g.row(1).iter().any(|v| *v != 0.0));
        assert!(g.row(7).iter().all(|v| *v == 0.0));
    }
}
