use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr0: f64,
    /// Inverse-time decay rate: `lr = lr0 / (1 + decay·step)`.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr0: 5e-4, decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }
}

/// Adam with bias correction and an inverse-time learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<S: Real>(config: AdamConfig, store: &ParamStore<S>) -> Self {
        let zeros = || store.iter().map(|(_, p)| alloc::vec![T::zero(); if p.trainable { p.value.len() } else { 0 }]).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate used by the update at optimizer step `step` (0-based).
    pub fn learning_rate(&self, step: u64) -> f64 {
        self.config.lr0 / (1.0 + self.config.decay * step as f64)
    }

    /// One update of every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        let lr = self.learning_rate(self.step);
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (inv_c1, inv_c2) = (T::of(1.0 / c1), T::of(1.0 / c2));
        let (lr, eps) = (T::of(lr), T::of(eps));
        for (id, g) in grads.params() {
            if !store.is_trainable(id) {
                continue;
            }
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = store.get_mut(id).data_mut();
            for (((p, &g), m), v) in p.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Mode, Tensor};

    fn quadratic_grads(store: &ParamStore<f64>, scale: f64) -> Gradients<f64> {
        let mut g = Graph::new(store, Mode::Train, 0);
        let p = g.param(crate::nn::ParamId(0));
        let x = g.input(Tensor::new(&[1, 1], alloc::vec![scale]).unwrap());
        let y = g.dense(x, p, None).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap()
    }

    #[test]
    fn inverse_time_schedule() {
        let store = ParamStore::<f64>::new();
        let adam = Adam::<f64>::new(AdamConfig::default(), &store);
        assert_eq!(adam.learning_rate(0), 5e-4);
        assert!((adam.learning_rate(10_000) - 2.5e-4).abs() < 1e-18);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        for g0 in [3.0, -0.02, 1e-3] {
            let mut store = ParamStore::new();
            store.add("p", Tensor::new(&[1, 1], alloc::vec![1.0]).unwrap(), true);
            let mut adam = Adam::new(AdamConfig::default(), &store);
            let grads = quadratic_grads(&store, g0);
            adam.step(&mut store, &grads);
            let delta = store.get(crate::nn::ParamId(0)).data()[0] - 1.0;
            assert!(delta.signum() == -g0.signum());
            assert!((0.99 * 5e-4..=5e-4).contains(&delta.abs()), "{delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.add("p", Tensor::new(&[1, 1], alloc::vec![0.25]).unwrap(), true);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..3 {
            let grads = quadratic_grads(&store, 0.0);
            adam.step(&mut store, &grads);
        }
        assert_eq!(store.get(crate::nn::ParamId(0)).data()[0], 0.25);
    }
}
