use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{NodeId, Tape};
use crate::error::Result;

/// Inverted dropout: in training mode each unit is zeroed with probability
/// `p` and survivors are scaled by `1/(1-p)`; in evaluation mode it is the
/// identity and records nothing.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn train(p: f64, rng: ChaCha8Rng) -> Self {
        Self { p, rng: Some(rng) }
    }

    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn is_active(&self) -> bool {
        self.p > 0.0 && self.rng.is_some()
    }

    pub fn apply(&mut self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let p = self.p;
        let Some(rng) = self.rng.as_mut().filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - p);
        let scale = (0..tape.value(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        tape.dropout(x, scale)
    }
}
