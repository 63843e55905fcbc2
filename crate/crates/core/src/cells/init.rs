use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Scalar, Tensor};

/// `U(−1/√fan_in, 1/√fan_in)`.
pub fn fan_in_uniform<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    uniform(rng, shape, -bound, bound)
}

/// He-style uniform scaling for ReLU convolutions: `U(±√(6/fan_in))`.
pub fn he_uniform<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    uniform(rng, shape, -bound, bound)
}

pub fn uniform<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.random_range(lo..hi))).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// Normal(0, std) with draws beyond two standard deviations resampled.
pub fn truncated_normal<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break T::of(v);
            }
        })
        .collect();
    Tensor::new(shape, data).expect("init shape")
}
