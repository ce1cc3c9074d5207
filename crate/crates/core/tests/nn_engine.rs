mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shm_core::nn::layers::{conv2d_forward, maxpool2d_backward, maxpool2d_forward};
use shm_core::nn::{finite_difference_check, Architecture, ConvSpec, LayerSpec, Network, Tensor, FD_PARAM_LIMIT};
use shm_core::NnError;

use common::{random_net, random_tensor, reference_conv};

#[test]
fn conv_matches_quadruple_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (stride, pad, size) in [(1, 0, 6), (1, 1, 6), (2, 0, 7), (2, 2, 7)] {
        let x = random_tensor(&mut rng, vec![2, size, size]);
        let spec = ConvSpec::new(3, 3, stride, pad).unwrap();
        let w: Vec<f64> = (0..spec.num_weights(2)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = conv2d_forward(&x, &w, &b, &spec).unwrap();
        let r = reference_conv(&x, &w, &b, 3, 3, stride, pad);
        assert_eq!(y.len(), r.len());
        for (a, e) in y.data().iter().zip(&r) {
            assert!((a - e).abs() <= 1e-12, "{a} vs {e}");
        }
    }
}

#[test]
fn unit_filter_passes_gradient_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, vec![1, 4, 4]);
    let up = random_tensor(&mut rng, vec![1, 4, 4]);
    let g = shm_core::nn::layers::conv2d_backward(&up, &x, &[1.0], &ConvSpec::valid(1, 1).unwrap()).unwrap();
    assert_eq!(g.input, up);
}

#[test]
fn gradient_checks_over_twenty_seeds() {
    for seed in 0..20 {
        for (name, net, tol) in common::gradient_cases(seed) {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
            let err = common::fd_error(&net, &mut rng);
            assert!(err <= tol, "{name}, seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn linear_net_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = random_net(&mut rng, vec![4], vec![LayerSpec::Dense { outputs: 2 }]);
    let x = random_tensor(&mut rng, vec![4]);
    let r = finite_difference_check(&net, &x, &[0.3, -0.2], 1e-4).unwrap();
    assert!(r.max_relative_error <= 1e-10, "{r:?}");
}

#[test]
fn gradient_check_refuses_large_models() {
    let net = Network::new(&Architecture { input_shape: vec![FD_PARAM_LIMIT], layers: vec![LayerSpec::Dense { outputs: 1 }] })
        .unwrap();
    let x = Tensor::zeros(vec![FD_PARAM_LIMIT]);
    assert!(matches!(finite_difference_check(&net, &x, &[0.0], 1e-5), Err(NnError::TooLarge(_))));
}

#[test]
fn shape_errors_name_the_layer() {
    let arch = Architecture {
        input_shape: vec![1, 10, 10],
        layers: vec![LayerSpec::MaxPool { extent: 4, stride: 4 }],
    };
    let msg = Network::new(&arch).unwrap_err().to_string();
    assert!(msg.contains("layer 0") && msg.contains("height"), "{msg}");
    let arch = Architecture { input_shape: vec![5], layers: vec![LayerSpec::GlobalAveragePool] };
    assert!(Network::new(&arch).is_err());
}

proptest! {
    #[test]
    fn maxpool_backward_conserves_gradient(seed in 0u64..10_000, extent in 1usize..4, cells in 1usize..5, depth in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = extent * cells;
        let x = random_tensor(&mut rng, vec![depth, n, n]);
        let (y, arg) = maxpool2d_forward(&x, extent, extent).unwrap();
        let up = random_tensor(&mut rng, y.shape().to_vec());
        let g = maxpool2d_backward(&up, &arg, x.shape()).unwrap();
        let total: f64 = up.data().iter().sum();
        prop_assert!((g.data().iter().sum::<f64>() - total).abs() <= 1e-12 * (1.0 + total.abs()));
        for (i, &a) in arg.iter().enumerate() {
            prop_assert_eq!(x.data()[a], y.data()[i]);
        }
    }

    #[test]
    fn forward_is_pure(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, vec![2, 6, 6], vec![
            LayerSpec::Conv(ConvSpec::same(2, 3).unwrap()),
            LayerSpec::Relu,
            LayerSpec::GlobalAveragePool,
            LayerSpec::Dense { outputs: 1 },
        ]);
        let x = random_tensor(&mut rng, vec![2, 6, 6]);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        prop_assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
