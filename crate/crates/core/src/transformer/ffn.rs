//! Position-wise feed-forward network: max(0, xW1+b1)W2 + b2.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::Param;
use crate::tensor::{ops, xavier_uniform, Tensor};

#[derive(Debug, Clone)]
pub struct FfnParams {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

impl FfnParams {
    pub fn new(
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        rng: &mut ChaCha8Rng,
        registry: &mut Vec<Param>,
    ) -> FfnParams {
        let p = FfnParams {
            w1: Param::new(format!("{prefix}.w1"), xavier_uniform(&[d_model, d_ff], rng)),
            b1: Param::new(
                format!("{prefix}.b1"),
                Tensor::zeros(&[d_ff]).unwrap().requires_grad(),
            ),
            w2: Param::new(format!("{prefix}.w2"), xavier_uniform(&[d_ff, d_model], rng)),
            b2: Param::new(
                format!("{prefix}.b2"),
                Tensor::zeros(&[d_model]).unwrap().requires_grad(),
            ),
        };
        registry.extend([p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone()]);
        p
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = ops::relu(&ops::add_bias(&ops::matmul(x, &self.w1.value())?, &self.b1.value())?);
        ops::add_bias(&ops::matmul(&h, &self.w2.value())?, &self.b2.value())
    }
}

/// Applies the two-layer ReLU network to every position independently.
pub fn position_wise_ffn(x: &Tensor, p: &FfnParams) -> Result<Tensor> {
    p.forward(x)
}
