use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Gated recurrent unit with reset (r), update (z) and candidate (n) gates:
///
/// ```text
/// r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
///
/// The three gates are stored stacked (`[r; z; n]`) in one input matrix and one
/// hidden matrix, each with its own bias.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let g = 3 * hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            w_ih: store.add_normal(&format!("{prefix}.w_ih"), &[g, input_dim], rng),
            w_hh: store.add_normal(&format!("{prefix}.w_hh"), &[g, hidden_dim], rng),
            b_ih: store.add_normal(&format!("{prefix}.b_ih"), &[g], rng),
            b_hh: store.add_normal(&format!("{prefix}.b_hh"), &[g], rng),
        }
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, h_prev: NodeId) -> Result<NodeId> {
        let (xl, hl) = (tape.value(x).len(), tape.value(h_prev).len());
        if xl != self.input_dim || hl != self.hidden_dim {
            return Err(Error::dim(
                "gru_step",
                &[self.input_dim, self.hidden_dim],
                &[xl, hl],
            ));
        }
        let h = self.hidden_dim;
        let gi = tape.affine(store, self.w_ih, Some(self.b_ih), x)?;
        let gh = tape.affine(store, self.w_hh, Some(self.b_hh), h_prev)?;

        let i_r = tape.slice(gi, 0, h)?;
        let h_r = tape.slice(gh, 0, h)?;
        let r_pre = tape.add(i_r, h_r)?;
        let r = tape.sigmoid(r_pre);

        let i_z = tape.slice(gi, h, h)?;
        let h_z = tape.slice(gh, h, h)?;
        let z_pre = tape.add(i_z, h_z)?;
        let z = tape.sigmoid(z_pre);

        let i_n = tape.slice(gi, 2 * h, h)?;
        let h_n = tape.slice(gh, 2 * h, h)?;
        let gated = tape.mul(r, h_n)?;
        let n_pre = tape.add(i_n, gated)?;
        let n = tape.tanh(n_pre);

        let keep = tape.one_minus(z);
        let fresh = tape.mul(keep, n)?;
        let carried = tape.mul(z, h_prev)?;
        tape.add(fresh, carried)
    }

    /// Runs the cell over `inputs` from a zero state and returns every hidden state.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut h = tape.zeros(self.hidden_dim);
        let mut states = Vec::with_capacity(inputs.len());
        for x in inputs {
            h = self.step(tape, store, *x, h)?;
            states.push(h);
        }
        Ok(states)
    }
}

/// Forward and backward cells over the same sequence.
#[derive(Debug, Clone, Copy)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            forward: GruCell::new(store, &format!("{prefix}.fwd"), input_dim, hidden_dim, rng),
            backward: GruCell::new(store, &format!("{prefix}.bwd"), input_dim, hidden_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim + self.backward.hidden_dim
    }

    /// Per-position `[h_f; h_b]` states plus the two final states.
    pub fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[NodeId],
    ) -> Result<(Vec<NodeId>, NodeId, NodeId)> {
        if inputs.is_empty() {
            return Err(Error::Contract("bidirectional GRU over empty sequence".into()));
        }
        let fwd = self.forward.run(tape, store, inputs)?;
        let reversed: Vec<NodeId> = inputs.iter().rev().copied().collect();
        let mut bwd = self.backward.run(tape, store, &reversed)?;
        let last_f = *fwd.last().expect("non-empty");
        let last_b = *bwd.last().expect("non-empty");
        bwd.reverse();
        let states = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| tape.concat(&[*f, *b]))
            .collect();
        Ok((states, last_f, last_b))
    }
}
