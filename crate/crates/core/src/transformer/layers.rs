//! Encoder and decoder layers with residual connections and layer
//! normalization in either pre-norm or post-norm placement.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::Param;
use crate::tensor::{ops, Tensor};

use super::attention::{AttentionParams, AttnMask};
use super::ffn::FfnParams;
use super::Forward;

const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LayerNormP {
    pub gamma: Param,
    pub beta: Param,
}

impl LayerNormP {
    pub fn new(prefix: &str, dim: usize, registry: &mut Vec<Param>) -> LayerNormP {
        let p = LayerNormP {
            gamma: Param::new(
                format!("{prefix}.g"),
                Tensor::ones(&[dim]).unwrap().requires_grad(),
            ),
            beta: Param::new(
                format!("{prefix}.b"),
                Tensor::zeros(&[dim]).unwrap().requires_grad(),
            ),
        };
        registry.extend([p.gamma.clone(), p.beta.clone()]);
        p
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        ops::layer_norm(x, &self.gamma.value(), &self.beta.value(), LN_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: AttentionParams,
    pub ffn: FfnParams,
    pub ln1: LayerNormP,
    pub ln2: LayerNormP,
}

impl EncoderLayer {
    pub fn new(
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        h: usize,
        rng: &mut ChaCha8Rng,
        registry: &mut Vec<Param>,
    ) -> EncoderLayer {
        EncoderLayer {
            attn: AttentionParams::new(&format!("{prefix}.attn"), d_model, h, rng, registry),
            ffn: FfnParams::new(&format!("{prefix}.ffn"), d_model, d_ff, rng, registry),
            ln1: LayerNormP::new(&format!("{prefix}.ln1"), d_model, registry),
            ln2: LayerNormP::new(&format!("{prefix}.ln2"), d_model, registry),
        }
    }

    pub fn forward(&self, x: &Tensor, fwd: &mut Forward, pre_norm: bool) -> Result<Tensor> {
        if pre_norm {
            let n = self.ln1.apply(x)?;
            let a = self.attn.forward(&n, &n, None, fwd)?;
            let x = ops::add(x, &fwd.dropout(&a))?;
            let f = self.ffn.forward(&self.ln2.apply(&x)?)?;
            ops::add(&x, &fwd.dropout(&f))
        } else {
            let a = self.attn.forward(x, x, None, fwd)?;
            let x = self.ln1.apply(&ops::add(x, &fwd.dropout(&a))?)?;
            let f = self.ffn.forward(&x)?;
            self.ln2.apply(&ops::add(&x, &fwd.dropout(&f))?)
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: AttentionParams,
    pub cross_attn: AttentionParams,
    pub ffn: FfnParams,
    pub ln1: LayerNormP,
    pub ln2: LayerNormP,
    pub ln3: LayerNormP,
}

impl DecoderLayer {
    pub fn new(
        prefix: &str,
        d_model: usize,
        d_ff: usize,
        h: usize,
        rng: &mut ChaCha8Rng,
        registry: &mut Vec<Param>,
    ) -> DecoderLayer {
        DecoderLayer {
            self_attn: AttentionParams::new(&format!("{prefix}.self"), d_model, h, rng, registry),
            cross_attn: AttentionParams::new(&format!("{prefix}.cross"), d_model, h, rng, registry),
            ffn: FfnParams::new(&format!("{prefix}.ffn"), d_model, d_ff, rng, registry),
            ln1: LayerNormP::new(&format!("{prefix}.ln1"), d_model, registry),
            ln2: LayerNormP::new(&format!("{prefix}.ln2"), d_model, registry),
            ln3: LayerNormP::new(&format!("{prefix}.ln3"), d_model, registry),
        }
    }

    /// Causal self-attention over the prefix, cross-attention over the
    /// encoder states, then the position-wise network.
    pub fn forward(
        &self,
        x: &Tensor,
        enc: &Tensor,
        fwd: &mut Forward,
        pre_norm: bool,
    ) -> Result<Tensor> {
        let causal = AttnMask::causal(x.shape()[0]);
        if pre_norm {
            let n = self.ln1.apply(x)?;
            let a = self.self_attn.forward(&n, &n, Some(&causal), fwd)?;
            let x = ops::add(x, &fwd.dropout(&a))?;
            let c = self
                .cross_attn
                .forward(&self.ln2.apply(&x)?, enc, None, fwd)?;
            let x = ops::add(&x, &fwd.dropout(&c))?;
            let f = self.ffn.forward(&self.ln3.apply(&x)?)?;
            ops::add(&x, &fwd.dropout(&f))
        } else {
            let a = self.self_attn.forward(x, x, Some(&causal), fwd)?;
            let x = self.ln1.apply(&ops::add(x, &fwd.dropout(&a))?)?;
            let c = self.cross_attn.forward(&x, enc, None, fwd)?;
            let x = self.ln2.apply(&ops::add(&x, &fwd.dropout(&c))?)?;
            let f = self.ffn.forward(&x)?;
            self.ln3.apply(&ops::add(&x, &fwd.dropout(&f))?)
        }
    }
}
