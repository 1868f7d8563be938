use super::params::ParamStore;
use crate::error::{Error, Result};

/// Linear warm-up to `peak` over the first `warmup_steps`, then linear decay to
/// zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(peak: f64, total_steps: usize, warmup_fraction: f64) -> Result<Self> {
        if !(peak >= 0.0) || !peak.is_finite() {
            return Err(Error::Config(format!("learning rate must be >= 0, got {peak}")));
        }
        if !(0.0..=1.0).contains(&warmup_fraction) {
            return Err(Error::Config(format!(
                "warm-up fraction must be in [0, 1], got {warmup_fraction}"
            )));
        }
        let warmup_steps = (total_steps as f64 * warmup_fraction).round() as usize;
        Ok(Self {
            peak,
            total_steps,
            warmup_steps,
        })
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        if step >= self.total_steps {
            return 0.0;
        }
        let remaining = (self.total_steps - step) as f64;
        let span = (self.total_steps - self.warmup_steps).max(1) as f64;
        self.peak * remaining / span
    }
}

/// Rescales all gradients so their global L2 norm is at most `cap`.
/// Returns the norm measured before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, cap: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > cap && norm > 0.0 {
        let factor = cap / norm;
        for p in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }
    norm
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Result<Self> {
        if !(weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        let zeros = || store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Ok(Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grads = p.grad.data().to_vec();
            for (((w, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                *w -= lr * self.weight_decay * *w;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn schedule_endpoints() {
        let s = LinearSchedule::new(1e-5, 100, 0.1).unwrap();
        assert_eq!(s.lr_at(0), 0.0);
        assert_eq!(s.lr_at(10), 1e-5);
        assert!((s.lr_at(5) - 5e-6).abs() < 1e-20);
        assert!((s.lr_at(55) - 5e-6).abs() < 1e-20);
        assert_eq!(s.lr_at(100), 0.0);
    }

    #[test]
    fn negative_lr_is_config_error() {
        assert!(matches!(LinearSchedule::new(-1.0, 10, 0.1), Err(Error::Config(_))));
        let store = ParamStore::new();
        let mut opt = AdamW::new(&store, 0.0).unwrap();
        let mut store = store;
        assert!(matches!(opt.step(&mut store, -1e-3), Err(Error::Config(_))));
    }

    #[test]
    fn clipping_scales_to_cap() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![0.0, 0.0]));
        store.get_mut(a).grad = Tensor::vector(vec![3.0, 4.0]);
        let norm = clip_grad_norm(&mut store, 1.0);
        assert_eq!(norm, 5.0);
        let g = store.grad(a).data();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        // below the cap nothing changes
        let norm = clip_grad_norm(&mut store, 10.0);
        assert!((norm - 1.0).abs() < 1e-15);
        assert!((store.grad(a).data()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0, -1.0]));
        store.get_mut(a).grad = Tensor::vector(vec![0.5, -2.0]);
        let mut opt = AdamW::new(&store, 0.0).unwrap();
        opt.step(&mut store, 0.1).unwrap();
        let v = store.value(a).data();
        assert!((v[0] - 0.9).abs() < 1e-7);
        assert!((v[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![2.0]));
        let mut opt = AdamW::new(&store, 0.5).unwrap();
        opt.step(&mut store, 0.1).unwrap();
        // zero gradient: only the decay term acts
        assert!((store.value(a).data()[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }
}
