use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{
    pixel_shuffle, pixel_unshuffle, BnMode, BnStats, ConvSpec, Graph, Tensor, TensorError,
};

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn conv_all_ones_hand_sum() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::ones([1, 1, 3, 3]));
    let w = g.constant(Tensor::ones([1, 1, 3, 3]));
    let b = g.constant(Tensor::zeros([1]));
    let y = g.conv2d(x, w, Some(b), ConvSpec::same(1, 1, 3)).unwrap();
    let out = g.value(y);
    assert_eq!(out.shape(), &[1, 1, 3, 3]);
    assert_eq!(out.at4(0, 0, 1, 1), 9.0);
    for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        assert_eq!(out.at4(0, 0, r, c), 4.0);
    }
    assert_eq!(out.at4(0, 0, 0, 1), 6.0);
}

#[test]
fn conv_identity_kernel() {
    let mut g = Graph::<f64>::new();
    let input = random(&[2, 1, 5, 7], 3);
    let x = g.constant(input.clone());
    let w = g.constant(Tensor::ones([1, 1, 1, 1]));
    let b = g.constant(Tensor::zeros([1]));
    let y = g.conv2d(x, w, Some(b), ConvSpec::new(1, 1, 1)).unwrap();
    assert_eq!(g.value(y), &input);
}

#[test]
fn conv_stride_arithmetic() {
    let spec = ConvSpec::new(1, 2, 4).with_stride(2).with_padding(1);
    assert_eq!(spec.output_size(96, 96).unwrap(), (48, 48));
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros([1, 1, 96, 96]));
    let w = g.constant(Tensor::zeros([2, 1, 4, 4]));
    let y = g.conv2d(x, w, None, spec).unwrap();
    assert_eq!(g.shape(y), &[1, 2, 48, 48]);
}

#[test]
fn conv_reports_offending_dimension() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros([1, 3, 8, 8]));
    let w = g.constant(Tensor::zeros([4, 2, 3, 3]));
    let err = g.conv2d(x, w, None, ConvSpec::same(2, 4, 3)).unwrap_err();
    assert_eq!(
        err,
        TensorError::DimMismatch {
            op: "conv2d",
            dim: "in_channels",
            expected: 2,
            actual: 3
        }
    );
    let small = g.constant(Tensor::zeros([1, 2, 2, 2]));
    assert!(g.conv2d(small, w, None, ConvSpec::new(2, 4, 3)).is_err());
}

#[test]
fn batch_norm_train_standardizes() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(random(&[4, 3, 5, 5], 11).map(|v| 3.0 * v + 1.5));
    let gamma = g.constant(Tensor::ones([3]));
    let beta = g.constant(Tensor::zeros([3]));
    let mut stats = BnStats::new(3);
    let y = g.batch_norm(x, gamma, beta, &mut stats, BnMode::Train).unwrap();
    let out = g.value(y);
    for c in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|n| (0..25).map(move |i| (n, i)))
            .map(|(n, i)| out.at4(n, c, i / 5, i % 5))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-5, "var {var}");
    }
    // Running stats moved towards the batch statistics with momentum 0.1.
    assert!(stats.running_mean.iter().all(|&m| m > 0.0 && m < 0.5));
}

#[test]
fn batch_norm_zero_gamma_gives_beta() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(random(&[2, 2, 3, 3], 5));
    let gamma = g.constant(Tensor::zeros([2]));
    let beta = g.constant(Tensor::new([2], vec![0.25, -1.0]).unwrap());
    let mut stats = BnStats::new(2);
    let y = g.batch_norm(x, gamma, beta, &mut stats, BnMode::Train).unwrap();
    let out = g.value(y);
    for n in 0..2 {
        for i in 0..9 {
            assert_eq!(out.at4(n, 0, i / 3, i % 3), 0.25);
            assert_eq!(out.at4(n, 1, i / 3, i % 3), -1.0);
        }
    }
}

#[test]
fn batch_norm_eval_matches_formula() {
    let input = random(&[1, 2, 3, 3], 9);
    let mut g = Graph::<f64>::new();
    let x = g.constant(input.clone());
    let gamma = g.constant(Tensor::new([2], vec![1.5, -0.5]).unwrap());
    let beta = g.constant(Tensor::new([2], vec![0.1, 0.2]).unwrap());
    let mut stats = BnStats {
        running_mean: vec![0.3, -0.2],
        running_var: vec![2.0, 0.5],
    };
    let before = stats.clone();
    let y = g.batch_norm(x, gamma, beta, &mut stats, BnMode::Eval).unwrap();
    assert_eq!(stats, before);
    let params = [(0.3, 2.0, 1.5, 0.1), (-0.2, 0.5, -0.5, 0.2)];
    for (c, (m, v, ga, be)) in params.into_iter().enumerate() {
        for i in 0..9 {
            let expect = (input.at4(0, c, i / 3, i % 3) - m) / (v + 1e-5f64).sqrt() * ga + be;
            assert!((g.value(y).at4(0, c, i / 3, i % 3) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_norm_single_value_per_channel_is_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::ones([1, 2, 1, 1]));
    let gamma = g.constant(Tensor::ones([2]));
    let beta = g.constant(Tensor::zeros([2]));
    let mut stats = BnStats::new(2);
    assert!(g.batch_norm(x, gamma, beta, &mut stats, BnMode::Train).is_err());
    assert!(g.batch_norm(x, gamma, beta, &mut stats, BnMode::Eval).is_ok());
}

#[test]
fn max_pool_basics() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.max_pool2(x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);

    let c = g.constant(Tensor::full([1, 2, 4, 6], 0.7));
    let p = g.max_pool2(c).unwrap();
    assert_eq!(g.value(p), &Tensor::full([1, 2, 2, 3], 0.7));

    let odd = g.constant(Tensor::zeros([1, 1, 3, 4]));
    assert!(g.max_pool2(odd).is_err());
}

#[test]
fn max_pool_ties_route_to_first_index() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::full([1, 1, 2, 2], 1.0));
    let y = g.max_pool2(x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn upsample_nearest_basics() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::full([1, 1, 1, 1], 2.5));
    let u = g.upsample_nearest2(a).unwrap();
    assert_eq!(g.value(u).data(), &[2.5; 4]);

    let input = random(&[1, 3, 5, 7], 1);
    let x = g.constant(input.clone());
    let u = g.upsample_nearest2(x).unwrap();
    assert_eq!(g.shape(u), &[1, 3, 10, 14]);
    let back = g.max_pool2(u).unwrap();
    assert_eq!(g.value(back), &input);
}

#[test]
fn pixel_shuffle_tiles_channel_pattern() {
    let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
    let mut data = Vec::new();
    for v in [a, b, c, d] {
        data.extend([v; 4]);
    }
    let x = Tensor::new([1, 4, 2, 2], data).unwrap();
    let y = pixel_shuffle(&x, 2).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    #[rustfmt::skip]
    let expect = [
        a, b, a, b,
        c, d, c, d,
        a, b, a, b,
        c, d, c, d,
    ];
    assert_eq!(y.data(), &expect);
    assert_eq!(y.sum(), x.sum());
    assert!(pixel_shuffle(&Tensor::<f64>::zeros([1, 6, 2, 2]), 2).is_err());
}

#[test]
fn activations() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new([3], vec![-1.0, 0.0, 2.0]).unwrap());
    let lr = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(lr).data(), &[-0.2, 0.0, 2.0]);

    let z = g.param(Tensor::scalar(0.0));
    let s = g.sigmoid(z);
    assert_eq!(g.value(s).item(), 0.5);
    g.backward(s).unwrap();
    assert_eq!(g.grad(z).unwrap().item(), 0.25);

    let r = g.relu(x);
    let rs = g.sum(r);
    g.backward(rs).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);

    let logits = g.constant(Tensor::full([2, 5], 3.0));
    let sm = g.softmax(logits, 1).unwrap();
    for &p in g.value(sm).data() {
        assert!((p - 0.2).abs() < 1e-15);
    }
    assert!(g.softmax(logits, 2).is_err());
}

#[test]
fn global_avg_pool_values_and_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new([1, 1, 2, 2], vec![0.0, 2.0, 4.0, 6.0]).unwrap());
    let p = g.global_avg_pool(x).unwrap();
    assert_eq!(g.shape(p), &[1, 1]);
    assert_eq!(g.value(p).item(), 3.0);
    g.backward(p).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[0.25; 4]);
    let c = g.constant(Tensor::full([2, 3, 4, 4], -1.25));
    let pc = g.global_avg_pool(c).unwrap();
    assert!(g.value(pc).data().iter().all(|&v| v == -1.25));
}

#[test]
fn linear_identity_zero_and_mismatch() {
    let mut g = Graph::<f64>::new();
    let input = random(&[3, 4], 2);
    let x = g.constant(input.clone());
    let eye = Tensor::from_fn([4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
    let w = g.constant(eye);
    let zb = g.constant(Tensor::zeros([4]));
    let y = g.linear(x, w, Some(zb)).unwrap();
    assert_eq!(g.value(y), &input);

    let zw = g.constant(Tensor::zeros([2, 4]));
    let b = g.constant(Tensor::new([2], vec![0.5, -0.5]).unwrap());
    let y = g.linear(x, zw, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);

    let bad = g.constant(Tensor::zeros([2, 3]));
    assert!(matches!(
        g.linear(x, bad, None),
        Err(TensorError::DimMismatch { dim: "in_features", .. })
    ));
}

#[test]
fn concat_channels_layout() {
    let mut g = Graph::<f64>::new();
    let a_t = random(&[2, 8, 4, 4], 4);
    let b_t = random(&[2, 8, 4, 4], 5);
    let a = g.constant(a_t.clone());
    let b = g.constant(b_t.clone());
    let single = g.concat_channels(&[a]).unwrap();
    assert_eq!(g.value(single), &a_t);
    let ab = g.concat_channels(&[a, b]).unwrap();
    assert_eq!(g.shape(ab), &[2, 16, 4, 4]);
    assert_eq!(g.value(ab).slice_channels(0, 8).unwrap(), a_t);
    assert_eq!(g.value(ab).slice_channels(8, 8).unwrap(), b_t);
    let c = g.constant(Tensor::zeros([2, 1, 4, 5]));
    assert!(g.concat_channels(&[a, c]).is_err());
}

#[test]
fn backward_of_sum_of_squares() {
    let input = random(&[5], 8);
    let mut g = Graph::<f64>::new();
    let x = g.param(input.clone());
    let sq = g.square(x);
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    let expect = input.map(|v| 2.0 * v);
    assert_eq!(g.grad(x).unwrap(), &expect);

    // A second sweep without reset accumulates.
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &input.map(|v| 4.0 * v));
    g.zero_grad();
    assert!(g.grad(x).is_none());
}

#[test]
fn backward_of_constant_loss_leaves_zero_grads() {
    let mut g = Graph::<f64>::new();
    let x = g.param(random(&[3], 1));
    let c = g.constant(Tensor::scalar(4.0));
    g.backward(c).unwrap();
    assert_eq!(g.grad_or_zeros(x), Tensor::zeros([3]));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::<f64>::new();
    let x = g.param(random(&[3], 1));
    let y = g.square(x);
    assert_eq!(g.backward(y), Err(TensorError::NonScalarLoss(vec![3])));
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.constant(random(&[2, 3, 9, 9], 1).cast());
        let w = g.constant(random(&[4, 3, 3, 3], 2).cast());
        let y = g.conv2d(x, w, None, ConvSpec::same(3, 4, 3)).unwrap();
        let gamma = g.constant(Tensor::ones([4]));
        let beta = g.constant(Tensor::zeros([4]));
        let mut stats = BnStats::new(4);
        let y = g.batch_norm(y, gamma, beta, &mut stats, BnMode::Train).unwrap();
        let y = g.sigmoid(y);
        g.value(y).clone()
    };
    let a = run();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               run().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(a.all_finite());
}

proptest! {
    #[test]
    fn pixel_shuffle_inverse_is_bit_exact(
        n in 1usize..3, c in 1usize..3, h in 1usize..5, w in 1usize..5, r in 1usize..4, seed in any::<u64>()
    ) {
        let x = random(&[n, c * r * r, h, w], seed);
        let y = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(y.shape(), &[n, c, h * r, w * r][..]);
        prop_assert_eq!(pixel_unshuffle(&y, r), x);
    }

    #[test]
    fn softmax_rows_lie_on_simplex(len in 1usize..9, rows in 1usize..4, scale in 0.1f64..50.0, seed in any::<u64>()) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(random(&[rows, len], seed).map(|v| v * scale));
        let s = g.softmax(x, 1).unwrap();
        for row in g.value(s).data().chunks(len) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn relu_and_pool_paths_agree_across_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let h = 2 * rng.gen_range(1..5);
        let x = random(&[1, 2, h, h], rng.gen());
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone());
        let up = g.upsample_nearest2(xv).unwrap();
        let back = g.max_pool2(up).unwrap();
        assert_eq!(g.value(back), &x);
    }
}
