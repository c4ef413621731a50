use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float as _;

use super::{Real, Tensor};

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initializer {
    /// Uniform in `±√(6/fan_in)`, for layers followed by a ReLU.
    HeUniform,
    /// Uniform in `±√(6/(fan_in + fan_out))`.
    GlorotUniform,
}

impl Initializer {
    pub fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Initializer::HeUniform => (6.0 / fan_in as f64).sqrt(),
            Initializer::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }

    /// Draws in `f64` and casts, so `f32` and `f64` models built from the same
    /// seed agree.
    pub fn sample<T: Real, R: Rng + ?Sized>(self, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
        let a = self.limit(fan_in, fan_out);
        Tensor::from_fn(shape, |_| T::of(a * (2.0 * rng.random::<f64>() - 1.0)))
    }
}

pub fn he_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    Initializer::HeUniform.sample(shape, fan_in, 0, rng)
}

pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    Initializer::GlorotUniform.sample(shape, fan_in, fan_out, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_stay_inside_the_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Tensor<f64> = he_uniform(&[64, 9], 9, &mut rng);
        let a = (6.0f64 / 9.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= a));
        assert!(t.max_abs() > 0.9 * a);
        let g: Tensor<f64> = glorot_uniform(&[10, 30], 10, 30, &mut rng);
        assert!(g.max_abs() <= (6.0f64 / 40.0).sqrt());
    }

    #[test]
    fn precision_does_not_change_the_draw() {
        let a: Tensor<f32> = he_uniform(&[5], 3, &mut ChaCha8Rng::seed_from_u64(4));
        let b: Tensor<f64> = he_uniform(&[5], 3, &mut ChaCha8Rng::seed_from_u64(4));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
