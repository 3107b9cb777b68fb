//! Seeded parameter initialization.

use rand::Rng;

use super::Tensor;

/// Uniform(−r, r) with r = sqrt(6/(fan_in+fan_out)). Used for all weight
/// matrices; biases and layer-norm shifts start at zero.
pub fn xavier_uniform<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    assert_eq!(shape.len(), 2, "xavier_uniform expects a matrix shape");
    xavier_uniform_fan(shape, shape[0], shape[1], rng)
}

/// Xavier-uniform with explicit fan counts, for weights whose shape does not
/// directly encode them (convolution kernels).
pub fn xavier_uniform_fan<R: Rng>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(-r..r)).collect();
    Tensor::new(data, shape).expect("valid init shape").requires_grad()
}
