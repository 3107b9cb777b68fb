//! Label-smoothed cross entropy.

use crate::error::{Error, Result};
use crate::tensor::{ops, Tensor};

/// Cross entropy of per-position logits against the smoothed target
/// distribution q(target) = 1−eps+eps/V, q(other) = eps/V, averaged over
/// non-pad positions.
pub fn label_smoothed_loss(
    logits: &Tensor,
    targets: &[u32],
    eps: f64,
    pad_id: Option<u32>,
) -> Result<Tensor> {
    let (sum, count) = label_smoothed_loss_sum(logits, targets, eps, pad_id)?;
    Ok(ops::scale(&sum, 1.0 / count as f64))
}

/// Unnormalized variant: the summed loss plus the number of contributing
/// positions, so batches can average over their total token count.
pub fn label_smoothed_loss_sum(
    logits: &Tensor,
    targets: &[u32],
    eps: f64,
    pad_id: Option<u32>,
) -> Result<(Tensor, usize)> {
    if logits.rank() != 2 {
        return Err(Error::InvalidShape {
            op: "label_smoothed_loss",
            shape: logits.shape().to_vec(),
            reason: "logits must be positions × vocab".into(),
        });
    }
    let (l, v) = (logits.shape()[0], logits.shape()[1]);
    if targets.len() != l {
        return Err(Error::ShapeMismatch {
            op: "label_smoothed_loss",
            lhs: vec![l, v],
            rhs: vec![targets.len()],
        });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "label_smoothed_loss: eps {eps} outside [0, 1)"
        )));
    }
    let mut q = vec![0.0; l * v];
    let mut count = 0usize;
    for (i, &t) in targets.iter().enumerate() {
        if pad_id == Some(t) {
            continue;
        }
        if t as usize >= v {
            return Err(Error::UnknownToken { id: t, vocab: v });
        }
        count += 1;
        let base = eps / v as f64;
        for j in 0..v {
            q[i * v + j] = base;
        }
        q[i * v + t as usize] += 1.0 - eps;
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "label_smoothed_loss: every position is padding".into(),
        ));
    }
    let q = Tensor::new(q, &[l, v])?;
    let logp = ops::log_softmax_rows(logits)?;
    let sum = ops::scale(&ops::sum(&ops::mul(&logp, &q)?), -1.0);
    Ok((sum, count))
}
