//! Training-time input augmentation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{ops, Tensor};

/// Randomly replaces embedded positions by the mean of themselves and a
/// uniformly drawn row of the embedding table. Each position is selected
/// independently with probability `rate`; unselected positions pass through
/// bit for bit. Gradients flow into both the original and the sampled rows.
pub fn embedding_average_augment(
    embedded: &Tensor,
    embedding_table: &Tensor,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "embedding_average_augment: rate {rate} outside [0, 1]"
        )));
    }
    if embedded.rank() != 2 || embedding_table.rank() != 2 {
        return Err(Error::InvalidArgument(
            "embedding_average_augment: expected matrices".into(),
        ));
    }
    let (len, dim) = (embedded.shape()[0], embedded.shape()[1]);
    let vocab = embedding_table.shape()[0];
    if embedding_table.shape()[1] != dim {
        return Err(Error::ShapeMismatch {
            op: "embedding_average_augment",
            lhs: embedded.shape().to_vec(),
            rhs: embedding_table.shape().to_vec(),
        });
    }
    if rate == 0.0 {
        return Ok(embedded.clone());
    }
    let selected: Vec<bool> = (0..len).map(|_| rng.random::<f64>() < rate).collect();
    let sampled: Vec<u32> = selected
        .iter()
        .map(|&s| {
            if s {
                rng.random_range(0..vocab) as u32
            } else {
                0
            }
        })
        .collect();
    if selected.iter().all(|&s| !s) {
        return Ok(embedded.clone());
    }
    // out = x ⊙ keep + (x·0.5 + sampled·0.5) ⊙ chosen, expressed with
    // constant masks so unselected rows are exactly x.
    let mut keep_mask = vec![0.0; len * dim];
    let mut half_mask = vec![0.0; len * dim];
    for (i, &s) in selected.iter().enumerate() {
        let v = if s { 0.0 } else { 1.0 };
        let h = if s { 0.5 } else { 0.0 };
        for j in 0..dim {
            keep_mask[i * dim + j] = v;
            half_mask[i * dim + j] = h;
        }
    }
    let keep_mask = Tensor::new(keep_mask, &[len, dim])?;
    let half_mask = Tensor::new(half_mask, &[len, dim])?;
    let gathered = ops::embedding(embedding_table, &sampled)?;
    let kept = ops::mul(embedded, &keep_mask)?;
    let own_half = ops::mul(embedded, &half_mask)?;
    let other_half = ops::mul(&gathered, &half_mask)?;
    ops::add(&kept, &ops::add(&own_half, &other_half)?)
}
