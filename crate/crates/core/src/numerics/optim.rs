use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// AdamW hyperparameters and moment buffers.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        AdamW::with_hyper(store, lr, 0.9, 0.999, 1e-8, 0.01)
    }

    pub fn with_hyper(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = |s: &ParamStore| s.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect::<Vec<_>>();
        AdamW {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: zeros(store),
            v: zeros(store),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One decoupled-weight-decay update of every trainable parameter:
    /// `p ← p − lr·wd·p − lr·m̂/(√v̂ + eps)`. Frozen parameters are skipped.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::usage(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for (k, (name, p)) in store.iter().enumerate() {
            if self.m[k].shape() != p.value.shape() {
                return Err(Error::usage(format!("optimizer state shape mismatch for {name}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (_, p)) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= self.lr * self.weight_decay * w[i];
                w[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut s = ParamStore::new();
        s.insert("p.w", Tensor::vector(vec![0.3, -1.2]), true);
        let before = s.by_name("p.w").unwrap().value.clone();
        let mut opt = AdamW::with_hyper(&s, 0.1, 0.9, 0.999, 1e-8, 0.0);
        opt.step(&mut s).unwrap();
        assert_eq!(s.by_name("p.w").unwrap().value, before);
    }

    #[test]
    fn single_scalar_step_matches_closed_form() {
        // p=2, g=0.5, lr=0.1, b1=0.9, b2=0.999, eps=1e-8, wd=0.01:
        // m=0.05, v=0.00025, m̂=0.5, v̂=0.25 → p' = 2 − 0.1·0.01·2 − 0.1·0.5/(0.5+1e-8)
        let mut s = ParamStore::new();
        let id = s.insert("p.w", Tensor::scalar(2.0), true);
        s.get_mut(id).grad = Tensor::scalar(0.5);
        let mut opt = AdamW::with_hyper(&s, 0.1, 0.9, 0.999, 1e-8, 0.01);
        opt.step(&mut s).unwrap();
        let expected = 2.0 - 0.1 * 0.01 * 2.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((s.get(id).value.item() - expected).abs() < 1e-15);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn frozen_parameter_untouched() {
        let mut s = ParamStore::new();
        let id = s.insert("p.w", Tensor::vector(vec![1.0, 2.0]), false);
        s.get_mut(id).grad = Tensor::vector(vec![3.0, -4.0]);
        let before = s.get(id).value.clone();
        let mut opt = AdamW::new(&s, 1.0);
        opt.step(&mut s).unwrap();
        let after = &s.get(id).value;
        assert!(before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mismatched_state_rejected() {
        let mut s = ParamStore::new();
        s.insert("p.w", Tensor::scalar(1.0), true);
        let mut opt = AdamW::new(&s, 0.1);
        s.insert("p.x", Tensor::scalar(1.0), true);
        assert!(opt.step(&mut s).is_err());
    }
}
