//! Scaled dot-product and multi-head attention.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::Param;
use crate::tensor::{ops, xavier_uniform, Tensor};

use super::Forward;

/// Boolean attention mask over the score matrix; `true` blocks a position.
#[derive(Debug, Clone)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
}

impl AttnMask {
    pub fn new(blocked: Vec<bool>, rows: usize, cols: usize) -> Result<AttnMask> {
        if blocked.len() != rows * cols {
            return Err(Error::InvalidShape {
                op: "attn_mask",
                shape: vec![rows, cols],
                reason: format!("mask length {}", blocked.len()),
            });
        }
        Ok(AttnMask {
            rows,
            cols,
            blocked,
        })
    }

    /// Causal mask: position i may attend to keys 0..=i.
    pub fn causal(n: usize) -> AttnMask {
        let mut blocked = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                blocked[i * n + j] = true;
            }
        }
        AttnMask {
            rows: n,
            cols: n,
            blocked,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn fully_masked_row(&self) -> Option<usize> {
        (0..self.rows).find(|&i| (0..self.cols).all(|j| self.blocked[i * self.cols + j]))
    }

    fn penalty(&self) -> Tensor {
        let data: Vec<f64> = self
            .blocked
            .iter()
            .map(|&b| if b { f64::NEG_INFINITY } else { 0.0 })
            .collect();
        Tensor::new(data, &[self.rows, self.cols]).expect("mask shape")
    }
}

/// softmax(QKᵀ/√d_k + mask)·V. Masked positions receive −∞ before the
/// softmax; a fully masked row has no valid key and is rejected.
pub fn scaled_dot_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&AttnMask>,
) -> Result<Tensor> {
    scaled_dot_attention_ctx(q, k, v, mask, &mut Forward::eval())
}

pub(crate) fn scaled_dot_attention_ctx(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&AttnMask>,
    fwd: &mut Forward,
) -> Result<Tensor> {
    if q.rank() != 2 || k.rank() != 2 || v.rank() != 2 {
        return Err(Error::InvalidArgument(
            "attention: Q, K, V must be matrices".into(),
        ));
    }
    if q.shape()[1] != k.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "attention q/k",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    if k.shape()[0] != v.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "attention k/v",
            lhs: k.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    if let Some(m) = mask {
        if m.shape() != (q.shape()[0], k.shape()[0]) {
            return Err(Error::ShapeMismatch {
                op: "attention mask",
                lhs: vec![q.shape()[0], k.shape()[0]],
                rhs: vec![m.rows, m.cols],
            });
        }
        if let Some(row) = m.fully_masked_row() {
            return Err(Error::Decode(format!(
                "attention: query row {row} has every key masked"
            )));
        }
    }
    let d_k = q.shape()[1] as f64;
    let mut scores = ops::scale(&ops::matmul(q, &ops::transpose(k)?)?, 1.0 / d_k.sqrt());
    if let Some(m) = mask {
        scores = ops::add(&scores, &m.penalty())?;
    }
    let weights = ops::softmax(&scores, 1)?;
    let weights = fwd.dropout(&weights);
    ops::matmul(&weights, v)
}

#[derive(Debug, Clone)]
pub struct AttentionHead {
    pub wq: Param,
    pub wk: Param,
    pub wv: Param,
}

/// Per-head projections (each `d_model × d_k`) plus the output projection
/// (`h·d_k × d_model`).
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: Vec<AttentionHead>,
    pub wo: Param,
    pub d_model: usize,
    pub d_k: usize,
}

impl AttentionParams {
    pub fn new(
        prefix: &str,
        d_model: usize,
        h: usize,
        rng: &mut ChaCha8Rng,
        registry: &mut Vec<Param>,
    ) -> AttentionParams {
        let d_k = d_model / h;
        let mut heads = Vec::with_capacity(h);
        for j in 0..h {
            let head = AttentionHead {
                wq: Param::new(format!("{prefix}.h{j}.wq"), xavier_uniform(&[d_model, d_k], rng)),
                wk: Param::new(format!("{prefix}.h{j}.wk"), xavier_uniform(&[d_model, d_k], rng)),
                wv: Param::new(format!("{prefix}.h{j}.wv"), xavier_uniform(&[d_model, d_k], rng)),
            };
            registry.extend([head.wq.clone(), head.wk.clone(), head.wv.clone()]);
            heads.push(head);
        }
        let wo = Param::new(
            format!("{prefix}.wo"),
            xavier_uniform(&[h * d_k, d_model], rng),
        );
        registry.push(wo.clone());
        AttentionParams {
            heads,
            wo,
            d_model,
            d_k,
        }
    }

    pub fn h(&self) -> usize {
        self.heads.len()
    }

    pub(crate) fn forward(
        &self,
        x_q: &Tensor,
        x_kv: &Tensor,
        mask: Option<&AttnMask>,
        fwd: &mut Forward,
    ) -> Result<Tensor> {
        if x_q.shape()[1] != self.d_model || x_kv.shape()[1] != self.d_model {
            return Err(Error::ShapeMismatch {
                op: "multi_head_attention",
                lhs: x_q.shape().to_vec(),
                rhs: vec![self.d_model],
            });
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = ops::matmul(x_q, &head.wq.value())?;
            let k = ops::matmul(x_kv, &head.wk.value())?;
            let v = ops::matmul(x_kv, &head.wv.value())?;
            outs.push(scaled_dot_attention_ctx(&q, &k, &v, mask, fwd)?);
        }
        let cat = if outs.len() == 1 {
            outs.pop().unwrap()
        } else {
            ops::concat(&outs, 1)?
        };
        ops::matmul(&cat, &self.wo.value())
    }
}

/// Per-head projected attention, concatenated and projected by W_O.
/// The output keeps the query-side shape.
pub fn multi_head_attention(
    x_q: &Tensor,
    x_kv: &Tensor,
    params: &AttentionParams,
    mask: Option<&AttnMask>,
) -> Result<Tensor> {
    params.forward(x_q, x_kv, mask, &mut Forward::eval())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_value_returns_v() {
        let q = Tensor::new(vec![0.3, -2.0, 0.0, 5.0], &[2, 2]).unwrap();
        let k = Tensor::new(vec![1.0, 1.0], &[1, 2]).unwrap();
        let v = Tensor::new(vec![7.0, -3.0, 2.0], &[1, 3]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v, None).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        for row in out.data().chunks(3) {
            assert_eq!(row, v.data());
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let q = Tensor::new(vec![0.5, 0.1], &[1, 2]).unwrap();
        let k = Tensor::new(vec![2.0, -1.0, 2.0, -1.0, 2.0, -1.0], &[3, 2]).unwrap();
        let v = Tensor::new(vec![3.0, 0.0, 6.0], &[3, 1]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v, None).unwrap();
        assert!((out.data()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        let q = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let k = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let v = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let out = scaled_dot_attention(&q, &k, &v, None).unwrap();
        // row 0 scores: [1,0]/√2; softmax by literal arithmetic
        let s = 1.0 / 2.0f64.sqrt();
        let w0 = s.exp() / (s.exp() + 1.0);
        let expect = [
            w0 * 1.0 + (1.0 - w0) * 3.0,
            w0 * 2.0 + (1.0 - w0) * 4.0,
            (1.0 - w0) * 1.0 + w0 * 3.0,
            (1.0 - w0) * 2.0 + w0 * 4.0,
        ];
        for (got, want) in out.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn fully_masked_row_rejected() {
        let q = Tensor::ones(&[2, 2]).unwrap();
        let k = Tensor::ones(&[2, 2]).unwrap();
        let v = Tensor::ones(&[2, 2]).unwrap();
        let mask = AttnMask::new(vec![false, false, true, true], 2, 2).unwrap();
        assert!(scaled_dot_attention(&q, &k, &v, Some(&mask)).is_err());
    }

    #[test]
    fn causal_mask_blocks_future() {
        let q = Tensor::new(vec![0.0, 0.0, 0.0, 0.0], &[2, 2]).unwrap();
        let k = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let v = Tensor::new(vec![10.0, 20.0], &[2, 1]).unwrap();
        let mask = AttnMask::causal(2);
        let out = scaled_dot_attention(&q, &k, &v, Some(&mask)).unwrap();
        assert_eq!(out.data()[0], 10.0);
        assert!((out.data()[1] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn single_head_identity_projection_equals_raw_attention() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut registry = Vec::new();
        let params = AttentionParams::new("t", 2, 1, &mut rng, &mut registry);
        let eye = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        params.heads[0].wq.set(eye.clone());
        params.heads[0].wk.set(eye.clone());
        params.heads[0].wv.set(eye.clone());
        params.wo.set(eye);
        let x = Tensor::new(vec![0.2, -0.4, 1.0, 0.7, -0.3, 0.9], &[3, 2]).unwrap();
        let got = multi_head_attention(&x, &x, &params, None).unwrap();
        let want = scaled_dot_attention(&x, &x, &x, None).unwrap();
        assert_eq!(got.data(), want.data());
        assert_eq!(got.shape(), x.shape());
    }
}
