//! Speech frontend: two stride-2 convolutions over time with ReLU, then a
//! linear projection of the channels to d_model. Sequence length shrinks to
//! ceil(ceil(T/2)/2) ≈ T/4; positional encodings are added afterwards by the
//! encoder.

use rand_chacha::ChaCha8Rng;

use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::params::Param;
use crate::tensor::{ops, xavier_uniform_fan, Tensor};

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Debug, Clone)]
pub struct ConvFrontend {
    pub conv1_w: Param,
    pub conv1_b: Param,
    pub conv2_w: Param,
    pub conv2_b: Param,
    pub proj_w: Param,
    pub proj_b: Param,
    feature_dim: usize,
}

impl ConvFrontend {
    pub fn new(
        prefix: &str,
        feature_dim: usize,
        channels: usize,
        d_model: usize,
        rng: &mut ChaCha8Rng,
        registry: &mut Vec<Param>,
    ) -> ConvFrontend {
        let conv1_w = Param::new(
            format!("{prefix}.conv1.w"),
            xavier_uniform_fan(
                &[channels, feature_dim, KERNEL],
                feature_dim * KERNEL,
                channels * KERNEL,
                rng,
            ),
        );
        let conv1_b = Param::new(
            format!("{prefix}.conv1.b"),
            Tensor::zeros(&[channels]).unwrap().requires_grad(),
        );
        let conv2_w = Param::new(
            format!("{prefix}.conv2.w"),
            xavier_uniform_fan(
                &[channels, channels, KERNEL],
                channels * KERNEL,
                channels * KERNEL,
                rng,
            ),
        );
        let conv2_b = Param::new(
            format!("{prefix}.conv2.b"),
            Tensor::zeros(&[channels]).unwrap().requires_grad(),
        );
        let proj_w = Param::new(
            format!("{prefix}.proj.w"),
            crate::tensor::xavier_uniform(&[channels, d_model], rng),
        );
        let proj_b = Param::new(
            format!("{prefix}.proj.b"),
            Tensor::zeros(&[d_model]).unwrap().requires_grad(),
        );
        let fe = ConvFrontend {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            proj_w,
            proj_b,
            feature_dim,
        };
        registry.extend([
            fe.conv1_w.clone(),
            fe.conv1_b.clone(),
            fe.conv2_w.clone(),
            fe.conv2_b.clone(),
            fe.proj_w.clone(),
            fe.proj_b.clone(),
        ]);
        fe
    }

    pub fn output_len(t: usize) -> usize {
        let once = (t + 2 * PAD - KERNEL) / STRIDE + 1;
        (once + 2 * PAD - KERNEL) / STRIDE + 1
    }

    pub fn forward(&self, features: &FeatureSequence) -> Result<Tensor> {
        if features.dim() != self.feature_dim {
            return Err(Error::ShapeMismatch {
                op: "conv_frontend",
                lhs: vec![features.len(), features.dim()],
                rhs: vec![self.feature_dim],
            });
        }
        if features.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "conv_frontend: sequence of {} frames is shorter than 4",
                features.len()
            )));
        }
        let x = features.to_tensor();
        let c1 = ops::relu(&ops::conv1d(
            &x,
            &self.conv1_w.value(),
            &self.conv1_b.value(),
            STRIDE,
            PAD,
        )?);
        let c2 = ops::relu(&ops::conv1d(
            &c1,
            &self.conv2_w.value(),
            &self.conv2_b.value(),
            STRIDE,
            PAD,
        )?);
        ops::add_bias(&ops::matmul(&c2, &self.proj_w.value())?, &self.proj_b.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn frontend(dim: usize, d_model: usize) -> ConvFrontend {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut reg = Vec::new();
        ConvFrontend::new("fe", dim, 8, d_model, &mut rng, &mut reg)
    }

    #[test]
    fn length_reduction_formula() {
        assert_eq!(ConvFrontend::output_len(16), 4);
        assert_eq!(ConvFrontend::output_len(17), 5);
        let fe = frontend(4, 6);
        for (t, want) in [(16usize, 4usize), (17, 5), (8, 2)] {
            let f = FeatureSequence::new(vec![0.5; t * 4], t, 4).unwrap();
            let out = fe.forward(&f).unwrap();
            assert_eq!(out.shape(), &[want, 6]);
        }
    }

    #[test]
    fn short_sequence_rejected() {
        let fe = frontend(4, 6);
        let f = FeatureSequence::new(vec![0.0; 3 * 4], 3, 4).unwrap();
        assert!(fe.forward(&f).is_err());
    }

    #[test]
    fn zero_input_with_zero_biases_is_zero() {
        let fe = frontend(4, 6);
        let f = FeatureSequence::new(vec![0.0; 8 * 4], 8, 4).unwrap();
        let out = fe.forward(&f).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let fe = frontend(4, 6);
        let f = FeatureSequence::new(vec![0.0; 8 * 5], 8, 5).unwrap();
        assert!(fe.forward(&f).is_err());
    }
}
