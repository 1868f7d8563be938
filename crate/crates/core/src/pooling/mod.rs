//! Pooling a contiguous run of vectors into one: elementwise mean, elementwise
//! max, or the concatenated final states of a bidirectional GRU.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::gradcheck::{self, GradCheckReport};
use crate::numerics::{BiGru, NodeId, ParamStore, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingKind {
    Mean,
    Max,
    Bigru,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 3] = [PoolingKind::Bigru, PoolingKind::Mean, PoolingKind::Max];

    pub fn name(self) -> &'static str {
        match self {
            PoolingKind::Mean => "mean",
            PoolingKind::Max => "max",
            PoolingKind::Bigru => "bigru",
        }
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoolingKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pooling `{s}` (mean, max, bigru)")))
    }
}

/// One pooling site. Bi-GRU pooling owns a forward and a backward cell of
/// hidden size `dim / 2`, both started from zero.
#[derive(Debug, Clone)]
pub struct Pooler {
    pub kind: PoolingKind,
    pub dim: usize,
    bigru: Option<BiGru>,
}

impl Pooler {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: PoolingKind,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bigru = match kind {
            PoolingKind::Bigru => {
                if !dim.is_multiple_of(2) {
                    return Err(Error::Config(format!("bigru pooling needs an even dimension, got {dim}")));
                }
                Some(BiGru::new(store, prefix, dim, dim / 2, rng))
            }
            _ => None,
        };
        Ok(Self { kind, dim, bigru })
    }

    pub fn pool(&self, tape: &mut Tape, store: &ParamStore, seq: &[NodeId]) -> Result<NodeId> {
        if seq.is_empty() {
            return Err(Error::Contract("pooling an empty sequence".into()));
        }
        for x in seq {
            let len = tape.value(*x).len();
            if len != self.dim {
                return Err(Error::dim("pool", &[self.dim], &[len]));
            }
        }
        match (self.kind, &self.bigru) {
            (PoolingKind::Mean, _) => {
                if seq.len() == 1 {
                    return Ok(seq[0]);
                }
                tape.mean(seq)
            }
            (PoolingKind::Max, _) => {
                if seq.len() == 1 {
                    return Ok(seq[0]);
                }
                tape.max(seq)
            }
            (PoolingKind::Bigru, Some(gru)) => {
                let f = *gru.forward.run(tape, store, seq)?.last().expect("non-empty");
                let reversed: Vec<NodeId> = seq.iter().rev().copied().collect();
                let b = *gru.backward.run(tape, store, &reversed)?.last().expect("non-empty");
                Ok(tape.concat(&[f, b]))
            }
            (PoolingKind::Bigru, None) => unreachable!("bigru pooler built without cells"),
        }
    }
}

/// Central-difference check of a pooler, differentiating with respect to both
/// the pooled inputs and the pooler's own weights. The loss is a fixed random
/// projection of the pooled vector.
pub fn pool_gradcheck<R: Rng + ?Sized>(
    kind: PoolingKind,
    seq: &[Tensor],
    rng: &mut R,
) -> Result<GradCheckReport> {
    let dim = seq.first().map_or(0, Tensor::len);
    let mut store = ParamStore::new();
    let inputs: Vec<_> = seq
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(&format!("input[{i}]"), t.clone()))
        .collect();
    let pooler = Pooler::new(&mut store, "pool", kind, dim, rng)?;
    let projection = Tensor::vector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
    gradcheck::check(&mut store, 1e-6, 64, rng, |tape, store| {
        let xs: Vec<NodeId> = inputs.iter().map(|p| tape.param(store, *p)).collect();
        let pooled = pooler.pool(tape, store, &xs)?;
        let w = tape.constant(projection.clone());
        let prod = tape.mul(pooled, w)?;
        Ok(tape.sum(prod))
    })
}
