//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use crate::error::Result;

/// Below this norm both gradients are treated as zero.
const ZERO_NORM: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(parameter name, relative error, entries checked)`
    pub per_param: Vec<(String, f64, usize)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    pub fn worst(&self) -> Option<&(String, f64, usize)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `||a - n|| / max(||a||, ||n||)` over the sampled entries of one tensor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < ZERO_NORM {
        0.0
    } else {
        diff / scale
    }
}

/// Compares backward-pass gradients of `loss_fn` against central differences
/// with step `eps`. Up to `per_param` entries of each parameter are probed:
/// half drawn among entries with nonzero analytic gradient, the rest uniformly.
pub fn check<R, F>(
    store: &mut ParamStore,
    eps: f64,
    per_param: usize,
    rng: &mut R,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    R: Rng + ?Sized,
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss, store)?;
    drop(tape);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        Ok(tape.value(loss).item())
    };

    let mut per = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = store.grad(id).data().to_vec();
        let n = grad.len();
        let entries: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            let nonzero: Vec<usize> = (0..n).filter(|i| grad[*i] != 0.0).collect();
            let mut picked: Vec<usize> = if nonzero.is_empty() {
                Vec::new()
            } else {
                let k = (per_param / 2).min(nonzero.len());
                sample(rng, nonzero.len(), k).into_iter().map(|i| nonzero[i]).collect()
            };
            let rest = per_param - picked.len();
            picked.extend(sample(rng, n, rest));
            picked.sort_unstable();
            picked.dedup();
            picked
        };
        let mut analytic = Vec::with_capacity(entries.len());
        let mut numeric = Vec::with_capacity(entries.len());
        for i in entries {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            analytic.push(grad[i]);
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let rel = relative_error(&analytic, &numeric);
        per.push((store.get(id).name.clone(), rel, analytic.len()));
    }
    let max_rel_error = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param: per,
        max_rel_error,
    })
}
