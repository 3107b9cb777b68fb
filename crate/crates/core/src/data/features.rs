//! Pseudo-speech feature synthesis and per-sequence normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::vocab::Vocabulary;

/// Internal seed from which per-token prototype vectors are derived, so that
/// prototypes depend only on the token id, never on the corpus seed.
const PROTOTYPE_SEED: u64 = 0x70726f746f;

/// A `T×F` matrix of per-frame features, row-major.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureSequence {
    frames: Vec<f64>,
    t: usize,
    dim: usize,
}

impl FeatureSequence {
    pub fn new(frames: Vec<f64>, t: usize, dim: usize) -> Result<FeatureSequence> {
        if t == 0 || dim == 0 || frames.len() != t * dim {
            return Err(Error::InvalidShape {
                op: "features",
                shape: vec![t, dim],
                reason: format!("flat length {}", frames.len()),
            });
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature frames".into()));
        }
        Ok(FeatureSequence { frames, t, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<FeatureSequence> {
        let t = rows.len();
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("features: ragged rows".into()));
        }
        FeatureSequence::new(rows.concat(), t, dim)
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.chunks(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.frames.clone(), &[self.t, self.dim]).expect("valid feature shape")
    }
}

/// Fixed prototype vector for one token id, uniform in [−1, 1].
pub fn token_prototype(id: u32, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROTOTYPE_SEED.wrapping_add(id as u64));
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Synthesizes pseudo-speech for a token sequence: each content token emits
/// `frames_per_token` copies of its prototype plus gaussian noise, giving a
/// monotone token-to-frame alignment by construction. Sentinel ids emit no
/// frames.
pub fn synth_features(
    token_ids: &[u32],
    seed: u64,
    frames_per_token: usize,
    noise_sd: f64,
    dim: usize,
) -> Result<FeatureSequence> {
    if frames_per_token < 1 {
        return Err(Error::InvalidArgument(
            "synth_features: frames_per_token must be >= 1".into(),
        ));
    }
    let content: Vec<u32> = token_ids
        .iter()
        .copied()
        .filter(|&id| !Vocabulary::is_reserved(id))
        .collect();
    if content.is_empty() {
        return Err(Error::InvalidArgument(
            "synth_features: no content tokens".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = content.len() * frames_per_token;
    let mut frames = Vec::with_capacity(t * dim);
    for &id in &content {
        let proto = token_prototype(id, dim);
        for _ in 0..frames_per_token {
            for &p in &proto {
                frames.push(p + noise_sd * gaussian(&mut rng));
            }
        }
    }
    FeatureSequence::new(frames, t, dim)
}

/// Per-dimension mean/variance normalization across the sequence. Dimensions
/// with zero variance have their mean removed and stay at zero.
pub fn cmvn(features: &FeatureSequence) -> Result<FeatureSequence> {
    let (t, dim) = (features.len(), features.dim());
    if t < 2 {
        return Err(Error::InvalidArgument(
            "cmvn: need at least 2 frames".into(),
        ));
    }
    let mut mean = vec![0.0f64; dim];
    for row in features.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    let mut var = vec![0.0f64; dim];
    for row in features.rows() {
        for (d, (s, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
            let c = s - m;
            *d += c * c;
        }
    }
    for v in &mut var {
        *v /= t as f64;
    }
    let mut out = Vec::with_capacity(t * dim);
    for row in features.rows() {
        for j in 0..dim {
            let centered = row[j] - mean[j];
            out.push(if var[j] > 0.0 {
                centered / var[j].sqrt()
            } else {
                centered
            });
        }
    }
    FeatureSequence::new(out, t, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_reproduces_prototypes() {
        let f = synth_features(&[4, 5, 4], 3, 2, 0.0, 8).unwrap();
        assert_eq!(f.len(), 6);
        let p4 = token_prototype(4, 8);
        assert_eq!(f.row(0), &p4[..]);
        assert_eq!(f.row(1), &p4[..]);
        assert_eq!(f.row(4), &p4[..]);
    }

    #[test]
    fn frame_count_is_tokens_times_fpt() {
        use super::super::vocab::EOS;
        let f = synth_features(&[4, 5, 6, 7, EOS], 0, 4, 0.1, 40).unwrap();
        assert_eq!(f.len(), 16, "sentinels contribute no frames");
        assert_eq!(f.dim(), 40);
    }

    #[test]
    fn seeds_differ_only_in_noise() {
        let sd = 0.05;
        let a = synth_features(&[4, 5], 1, 3, sd, 16).unwrap();
        let b = synth_features(&[4, 5], 2, 3, sd, 16).unwrap();
        let diffs: Vec<f64> = a
            .rows()
            .flatten()
            .zip(b.rows().flatten())
            .map(|(x, y)| x - y)
            .collect();
        let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
        // difference of two independent N(0, sd²) draws has sd·√2 spread
        let expect = sd * 2.0f64.sqrt();
        assert!(rms > 0.3 * expect && rms < 3.0 * expect, "rms {rms}");
    }

    #[test]
    fn cmvn_statistics() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let f = cmvn(&FeatureSequence::from_rows(&rows).unwrap()).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = f.rows().map(|r| r[j]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 10.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cmvn_idempotent() {
        let f = synth_features(&[4, 5, 6], 9, 2, 0.3, 5).unwrap();
        let once = cmvn(&f).unwrap();
        let twice = cmvn(&once).unwrap();
        for (a, b) in once.rows().flatten().zip(twice.rows().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cmvn_zeroes_constant_dimension() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]];
        let f = cmvn(&FeatureSequence::from_rows(&rows).unwrap()).unwrap();
        for row in f.rows() {
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn cmvn_rejects_single_frame() {
        let f = FeatureSequence::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(cmvn(&f).is_err());
    }
}
