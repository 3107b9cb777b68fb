//! Fixed trigonometric position embeddings, half-split layout: the first
//! d_model/2 dimensions are sines, the second half cosines, both with the
//! raw dimension index in the exponent.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max_pos × d_model` matrix with
/// `PE(pos, i) = sin(pos / 10000^(2i/d_model))` for `i < d_model/2` and
/// `cos(pos / 10000^(2i/d_model))` for `d_model/2 <= i < d_model`.
pub fn positional_encoding(max_pos: usize, d_model: usize) -> Result<Tensor> {
    if !d_model.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "positional_encoding: d_model {d_model} must be even"
        )));
    }
    if max_pos == 0 || d_model == 0 {
        return Err(Error::InvalidArgument(
            "positional_encoding: zero size".into(),
        ));
    }
    let mut data = vec![0.0; max_pos * d_model];
    for pos in 0..max_pos {
        for i in 0..d_model {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + i] = if i < d_model / 2 {
                angle.sin()
            } else {
                angle.cos()
            };
        }
    }
    Tensor::new(data, &[max_pos, d_model])
}
