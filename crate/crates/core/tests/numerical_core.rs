//! Gradient checks in f64 and the small numerical identities of the core.

mod common;

use common::{batch, bn, check_gradients, weighted};
use densitometer::model_zoo::{
    build_model, count_prunable_weights, init_bound, Family, InitScheme, ModelSpec,
};
use densitometer::nn::{cross_entropy_loss, Layer, Mode, Network, RngStream, Tensor};

#[test]
fn dense_stack_gradients() {
    let mut s = RngStream::keyed("gradcheck", 1, 0);
    let net = Network::new(
        vec![12],
        10,
        vec![
            Layer::Dense(weighted("fc1", &[9, 12], &mut s)),
            Layer::Relu,
            Layer::Dense(weighted("fc2", &[10, 9], &mut s)),
        ],
    );
    let (x, y) = batch(&mut s, &[5, 12]);
    assert!(check_gradients(net, &x, &y, 200) > 200);
}

#[test]
fn conv_gradients() {
    let mut s = RngStream::keyed("gradcheck", 2, 0);
    let net = Network::new(
        vec![2, 5, 5],
        10,
        vec![
            Layer::Conv2d(weighted("conv1", &[3, 2, 3, 3], &mut s)),
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense(weighted("fc", &[10, 75], &mut s)),
        ],
    );
    let (x, y) = batch(&mut s, &[3, 2, 5, 5]);
    check_gradients(net, &x, &y, 120);
}

#[test]
fn maxpool_gradients() {
    let mut s = RngStream::keyed("gradcheck", 3, 0);
    let net = Network::new(
        vec![2, 6, 6],
        10,
        vec![
            Layer::Conv2d(weighted("conv1", &[4, 2, 3, 3], &mut s)),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense(weighted("fc", &[10, 36], &mut s)),
        ],
    );
    let (x, y) = batch(&mut s, &[3, 2, 6, 6]);
    check_gradients(net, &x, &y, 120);
}

#[test]
fn batchnorm_gradients() {
    let mut s = RngStream::keyed("gradcheck", 4, 0);
    let net = Network::new(
        vec![2, 4, 4],
        10,
        vec![
            Layer::Conv2d(weighted("conv1", &[3, 2, 3, 3], &mut s)),
            Layer::BatchNorm(bn("bn1", 3, &mut s)),
            Layer::Relu,
            Layer::GlobalAvgPool,
            Layer::Dense(weighted("fc", &[10, 3], &mut s)),
        ],
    );
    let (x, y) = batch(&mut s, &[6, 2, 4, 4]);
    check_gradients(net, &x, &y, 60);
}

#[test]
fn residual_gradients() {
    let mut s = RngStream::keyed("gradcheck", 5, 0);
    let net = Network::new(
        vec![2, 4, 4],
        10,
        vec![
            Layer::Conv2d(weighted("conv1", &[3, 2, 3, 3], &mut s)),
            Layer::BatchNorm(bn("bn1", 3, &mut s)),
            Layer::Relu,
            Layer::Residual(vec![
                Layer::Conv2d(weighted("block.conv1", &[3, 3, 3, 3], &mut s)),
                Layer::BatchNorm(bn("block.bn1", 3, &mut s)),
                Layer::Relu,
                Layer::Conv2d(weighted("block.conv2", &[3, 3, 3, 3], &mut s)),
                Layer::BatchNorm(bn("block.bn2", 3, &mut s)),
            ]),
            Layer::Relu,
            Layer::GlobalAvgPool,
            Layer::Dense(weighted("fc", &[10, 3], &mut s)),
        ],
    );
    let (x, y) = batch(&mut s, &[6, 2, 4, 4]);
    check_gradients(net, &x, &y, 60);
}

#[test]
fn whole_conv2_network_gradients() {
    let mut spec = ModelSpec::new(Family::Conv2, 0.1);
    spec.input_shape = vec![3, 6, 6];
    let net: Network<f64> = build_model(&spec, InitScheme::He, &mut RngStream::keyed("init", 9, 0))
        .unwrap()
        .cast();
    let mut s = RngStream::keyed("gradcheck", 6, 0);
    let (x, y) = batch(&mut s, &[4, 3, 6, 6]);
    assert!(check_gradients(net, &x, &y, 40) >= 200);
}

#[test]
fn whole_resnet_lite_gradients() {
    let mut spec = ModelSpec::new(Family::ResNetLite, 0.25);
    spec.input_shape = vec![3, 4, 4];
    let net: Network<f64> = build_model(&spec, InitScheme::He, &mut RngStream::keyed("init", 9, 0))
        .unwrap()
        .cast();
    let mut s = RngStream::keyed("gradcheck", 7, 0);
    let (x, y) = batch(&mut s, &[6, 3, 4, 4]);
    assert!(check_gradients(net, &x, &y, 30) >= 200);
}

#[test]
fn uniform_logits_cost_ln_ten() {
    let logits = Tensor::<f64>::full(&[4, 10], 0.37);
    let (l, g) = cross_entropy_loss(&logits, &[0, 3, 7, 9]).unwrap();
    assert!((l - 10f64.ln()).abs() < 1e-6);
    let row_sum: f64 = g.row(0).iter().sum();
    assert!(row_sum.abs() < 1e-12);
    let (l32, _) = cross_entropy_loss(&Tensor::<f32>::zeros(&[2, 10]), &[1, 2]).unwrap();
    assert!((l32 - 10f64.ln()).abs() < 1e-6);
}

#[test]
fn init_samples_respect_bounds_and_variance() {
    for (scheme, spec) in [
        (InitScheme::Glorot, ModelSpec::new(Family::Mlp, 1.0)),
        (InitScheme::He, ModelSpec::new(Family::Mlp, 1.0)),
        (InitScheme::He, ModelSpec::new(Family::Conv2, 0.5)),
    ] {
        let net = build_model(&spec, scheme, &mut RngStream::keyed("init", 3, 0)).unwrap();
        for w in net.weight_layers() {
            let shape = w.weight.shape();
            let n_in: usize = shape[1..].iter().product();
            let receptive: usize = shape[2..].iter().product();
            let bound = init_bound(scheme, n_in, shape[0] * receptive);
            let data: Vec<f64> = w.weight.data().iter().map(|&v| v as f64).collect();
            assert!(
                data.iter().all(|v| v.abs() <= bound * (1.0 + 1e-6)),
                "{} exceeds bound",
                w.name
            );
            if data.len() < 1000 {
                continue;
            }
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64;
            let expected = bound * bound / 3.0;
            assert!(
                (var / expected - 1.0).abs() < 0.05,
                "{}: variance {var}, expected {expected}",
                w.name
            );
        }
    }
}

#[test]
fn mlp_counts_match_structure() {
    for (size, count) in [
        (0.1, 23_920),
        (0.5, 125_600),
        (1.0, 266_200),
        (2.0, 592_400),
        (5.0, 1_931_000),
    ] {
        let spec = ModelSpec::new(Family::Mlp, size);
        assert_eq!(count_prunable_weights(&spec), count);
        let net = build_model(
            &spec,
            InitScheme::Glorot,
            &mut RngStream::keyed("init", 0, 0),
        )
        .unwrap();
        assert_eq!(net.prunable_count(), count);
    }
    for family in [Family::Conv2, Family::ResNetLite] {
        let spec = ModelSpec::new(family, 0.5);
        let net = build_model(&spec, InitScheme::He, &mut RngStream::keyed("init", 0, 0)).unwrap();
        assert_eq!(net.prunable_count(), count_prunable_weights(&spec));
    }
}

#[test]
fn masked_weights_do_not_affect_output_or_receive_gradient() {
    let spec = ModelSpec::new(Family::Mlp, 0.1);
    let mut net: Network<f64> = build_model(
        &spec,
        InitScheme::Glorot,
        &mut RngStream::keyed("init", 0, 0),
    )
    .unwrap()
    .cast();
    let mut s = RngStream::keyed("mask", 0, 0);
    for w in net.weight_layers_mut() {
        let mask: Vec<f64> = (0..w.weight.len())
            .map(|_| if s.next_f64() < 0.5 { 0.0 } else { 1.0 })
            .collect();
        w.set_mask(Tensor::new(w.weight.shape().to_vec(), mask).unwrap())
            .unwrap();
    }
    let (x, y) = batch(&mut s, &[3, 1, 28, 28]);
    let before = net.predict(&x).unwrap();

    let mut perturbed = net.clone();
    for w in perturbed.weight_layers_mut() {
        let mask = w.mask.clone().unwrap();
        for (v, &m) in w.weight.data_mut().iter_mut().zip(mask.data()) {
            if m == 0.0 {
                *v += 100.0;
            }
        }
    }
    assert_eq!(perturbed.predict(&x).unwrap(), before);

    let (logits, cache) = net.forward(&x, Mode::Train).unwrap();
    let (_, d) = cross_entropy_loss(&logits, &y).unwrap();
    let grads = net.backward(&cache, &d).unwrap();
    let params = net.parameters();
    for (i, w) in net.weight_layers().iter().enumerate() {
        let g = &grads.tensors[params
            .iter()
            .position(|(n, _)| *n == format!("{}.weight", w.name))
            .unwrap()];
        for (gv, &m) in g.data().iter().zip(w.mask.as_ref().unwrap().data()) {
            if m == 0.0 {
                assert_eq!(*gv, 0.0, "layer {i}");
            }
        }
    }
}
