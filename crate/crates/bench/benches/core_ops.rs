//! Hot-path benchmarks: tensor ops and model forward/backward.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use sltk::data::synth_features;
use sltk::params::zero_grads;
use sltk::tensor::{ops, Tensor};
use sltk::transformer::{EncoderInput, Forward, InputMode, ModelConfig, SeqModel};

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(data, shape).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_tensor(&mut rng, &[32, 64]);
    let b = random_tensor(&mut rng, &[64, 64]);
    c.bench_function("matmul_32x64x64", |bench| {
        bench.iter(|| ops::matmul(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_softmax(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[64, 64]);
    c.bench_function("softmax_rows_64x64", |bench| {
        bench.iter(|| ops::softmax(black_box(&x), 1).unwrap())
    });
}

fn bench_forward_backward(c: &mut Criterion) {
    let cfg = ModelConfig {
        n_enc_layers: 4,
        n_dec_layers: 2,
        d_model: 64,
        d_ff: 128,
        h: 4,
        vocab_src: 17,
        vocab_tgt: 17,
        input_mode: InputMode::Speech,
        feature_dim: 40,
        conv_channels: 64,
        ..ModelConfig::default()
    };
    let model = SeqModel::new(cfg, 7).unwrap();
    let features = synth_features(&[4, 5, 6, 7, 8], 3, 4, 0.1, 40).unwrap();
    let target = [4u32, 15, 5, 15, 6, 15, 7, 15, 8];
    c.bench_function("speech_forward_backward", |bench| {
        bench.iter(|| {
            zero_grads(model.params());
            let (sum, count) = model
                .forward_loss(
                    EncoderInput::Features(black_box(&features)),
                    &target,
                    0.1,
                    &mut Forward::eval(),
                )
                .unwrap();
            let loss = ops::scale(&sum, 1.0 / count as f64);
            loss.backward().unwrap();
            loss.item()
        })
    });
}

criterion_group!(benches, bench_matmul, bench_softmax, bench_forward_backward);
criterion_main!(benches);
