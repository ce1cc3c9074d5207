//! Sequential against parallel execution of the three data-parallel paths:
//! FRF sample generation, minibatch gradients and the per-element PBP fits.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shm_core::dataset::DatasetSpec;
use shm_core::experiments::{cnn_architecture, lstm_architecture};
use shm_core::nn::{Network, Tensor};
use shm_core::par::{ordered_map, Execution};
use shm_core::pbp::{fit, PbpConfig, PbpNetwork};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn generation(c: &mut Criterion) {
    let spec = DatasetSpec::desk();
    let mut g = c.benchmark_group("generate_32_desk_samples");
    g.sample_size(10);
    for mode in MODES {
        g.bench_function(BenchmarkId::from_parameter(label(mode)), |b| {
            b.iter(|| ordered_map(mode, 32, |i| spec.sample(i * 19).unwrap().features.len()))
        });
    }
    g.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cases = [
        ("cnn_e4_20x100", cnn_architecture(3, 20, 100).unwrap()),
        ("lstm_4x500", lstm_architecture(2_000).unwrap()),
    ];
    let mut g = c.benchmark_group("batch_of_8_gradients");
    g.sample_size(10);
    for (name, arch) in cases {
        let mut net = Network::new(&arch).unwrap();
        net.init(&mut rng);
        let inputs: Vec<Tensor> = (0..8)
            .map(|_| {
                let data = (0..arch.input_shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
                Tensor::new(arch.input_shape.clone(), data).unwrap()
            })
            .collect();
        let target = vec![0.5; net.output_shape().iter().product()];
        for mode in MODES {
            g.bench_with_input(BenchmarkId::new(name, label(mode)), &mode, |b, &mode| {
                b.iter(|| {
                    let grads = ordered_map(mode, inputs.len(), |i| net.loss_and_grad(&inputs[i], &target).unwrap().1);
                    black_box(grads.iter().map(|g| g[0]).sum::<f64>())
                })
            });
        }
    }
    g.finish();
}

fn pbp_fits(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<Vec<f64>> = (0..100).map(|_| (0..200).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..4).map(|e| xs.iter().map(|x| x[e] - x[e + 4]).collect()).collect();
    let cfg = PbpConfig { epochs: 1, ..PbpConfig::default() };
    let mut g = c.benchmark_group("four_pbp_fits");
    g.sample_size(10);
    for mode in MODES {
        g.bench_function(BenchmarkId::from_parameter(label(mode)), |b| {
            b.iter(|| {
                ordered_map(mode, 4, |e| {
                    let mut net = PbpNetwork::new(200, &cfg, &mut ChaCha8Rng::seed_from_u64(e as u64)).unwrap();
                    fit(&mut net, &xs, &ys[e], cfg.epochs, 7).unwrap().mean_log_z[0]
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, generation, batch_gradient, pbp_fits);
criterion_main!(benches);
