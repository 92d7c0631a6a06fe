//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for every parameter in a store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        Self { config, m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let grad = store.grad(id).data().to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for ((p, g), (mi, vi)) in store
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .zip(&grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Applies one update of `optimizer` to `store`.
pub fn adam_step(store: &mut ParamStore, optimizer: &mut Adam) {
    optimizer.step(store);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use crate::tensor::Tensor;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", &[1], Init::Constant(v));
        s.initialize(0);
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        opt.step(&mut s);
        assert_eq!(s.get("p").unwrap().data(), &[0.7]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn bias_corrected_first_step() {
        // m1 = 0.1, v1 = 0.001; m_hat = 1, v_hat = 1 => delta = lr / (1 + eps)
        let mut s = scalar_store(1.0);
        let id = s.id("p").unwrap();
        s.grad_mut(id).data_mut()[0] = 1.0;
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mut opt = Adam::new(cfg, &s);
        opt.step(&mut s);
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().data()[0] - expected).abs() < 1e-12);
        // constant gradient keeps m_hat = v_hat = 1
        opt.step(&mut s);
        assert!((s.get("p").unwrap().data()[0] - (expected - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = scalar_store(0.0);
        a.set("p", Tensor::vector(vec![0.3])).unwrap();
        let mut b = a.clone();
        for s in [&mut a, &mut b] {
            let id = s.id("p").unwrap();
            s.grad_mut(id).data_mut()[0] = -0.25;
        }
        let mut oa = Adam::new(AdamConfig::default(), &a);
        let mut ob = Adam::new(AdamConfig::default(), &b);
        oa.step(&mut a);
        ob.step(&mut b);
        assert_eq!(a, b);
    }
}
