use dncl::data::{gen_scalar_toy, Dataset, ScalarToySpec};
use dncl::diagnostics::pairwise_diversity;
use dncl::ensemble::{
    aggregate, batch_gradients, generalized_ncl_loss, mean_pairwise_spread, ncl_loss,
    scalar_descent, train, Aggregator, HeadOutputs, MeanGradient, NclEnsemble, TrainConfig,
};
use dncl::losses::LossKind;
use dncl::netcore::{
    max_relative_error, numeric_gradient, sgd_step, Activation, Dense, Layer, LayerSpec, Network,
    OptimState, Rng, Tensor,
};
use dncl::Error;
use proptest::prelude::*;

fn heads(values: &[&[f64]]) -> HeadOutputs {
    let ts: Vec<Tensor> = values
        .iter()
        .map(|v| Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap())
        .collect();
    HeadOutputs::from_heads(&ts).unwrap()
}

fn col(v: &[f64]) -> Tensor {
    Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
}

/// Independent evaluation of Σ_k L_k for flat head values `K×N×O`.
fn ncl_total(g: &[f64], y: &[f64], k: usize, lambda: f64) -> f64 {
    let m = y.len();
    let n = m as f64; // O = 1 in these tests
    let mut total = 0.0;
    for s in 0..m {
        let mean: f64 = (0..k).map(|j| g[j * m + s]).sum::<f64>() / k as f64;
        for j in 0..k {
            let gk = g[j * m + s];
            total += (0.5 * (gk - y[s]).powi(2) - lambda * (gk - mean).powi(2)) / n;
        }
    }
    total
}

#[test]
fn lambda_zero_is_l2() {
    let l = ncl_loss(&heads(&[&[1.0], &[3.0]]), &col(&[2.0]), 0.0).unwrap();
    assert_eq!(l.per_head, vec![0.5, 0.5]);
}

#[test]
fn lambda_half_hand_example() {
    let l = ncl_loss(&heads(&[&[1.0], &[3.0]]), &col(&[2.0]), 0.5).unwrap();
    assert_eq!(l.per_head, vec![0.0, 0.0]);
    assert_eq!(l.total(), 0.0);
}

#[test]
fn negative_lambda_rejected() {
    assert!(ncl_loss(&heads(&[&[1.0], &[3.0]]), &col(&[2.0]), -0.1).is_err());
}

#[test]
fn single_head_mean_equals_head() {
    let h = heads(&[&[1.0, -2.0, 0.5]]);
    assert_eq!(h.per_head.data(), h.mean.data());
}

proptest! {
    #[test]
    fn sum_identity_at_half(k in 1usize..9, n in 1usize..20, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let vals: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let refs: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
        let h = heads(&refs);
        let l = ncl_loss(&h, &col(&y), 0.5).unwrap();
        let ensemble: f64 = (0..n).map(|i| (h.mean.data()[i] - y[i]).powi(2)).sum::<f64>() / n as f64;
        prop_assert!((l.total() - k as f64 / 2.0 * ensemble).abs() < 1e-10);
    }

    #[test]
    fn deviations_sum_to_zero(k in 1usize..17, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let vals: Vec<f64> = (0..k).map(|_| rng.uniform(-100.0, 100.0)).collect();
        let refs: Vec<&[f64]> = vals.chunks(1).collect();
        let h = heads(&refs);
        let m = h.mean.data()[0];
        let sum: f64 = vals.iter().map(|v| v - m).sum();
        prop_assert!(sum.abs() < 1e-12 * (1.0 + vals.iter().map(|v| v.abs()).fold(0.0, f64::max)));
        for (i, v) in vals.iter().enumerate() {
            let others: f64 = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, w)| w - m).sum();
            prop_assert!(((v - m) * others + (v - m).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn ncl_gradient_matches_finite_differences(k in 1usize..6, n in 1usize..5, lambda in 0.0f64..0.9, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let g: Vec<f64> = (0..k * n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let refs: Vec<&[f64]> = g.chunks(n).collect();
        let l = ncl_loss(&heads(&refs), &col(&y), lambda).unwrap();
        let num = numeric_gradient(&g, 1e-6, |p| ncl_total(p, &y, k, lambda));
        prop_assert!(max_relative_error(l.grad.data(), &num) < 1e-5);
    }
}

#[test]
fn full_and_detached_modes_share_total_gradient() {
    let h = heads(&[&[0.3, 1.0], &[-1.0, 2.0], &[2.5, 0.0]]);
    let y = col(&[0.5, 1.5]);
    let full = generalized_ncl_loss(LossKind::L2, &h, &y, 0.2, MeanGradient::Full).unwrap();
    let det = generalized_ncl_loss(LossKind::L2, &h, &y, 0.2, MeanGradient::Detached).unwrap();
    assert_eq!(full.per_head, det.per_head);
    for (a, b) in full.grad.data().iter().zip(det.grad.data()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn lambda_zero_head_gradient_ignores_other_heads() {
    let y = col(&[1.0, -1.0]);
    let base = ncl_loss(&heads(&[&[0.5, 0.2], &[2.0, 3.0]]), &y, 0.0).unwrap();
    let moved = ncl_loss(&heads(&[&[0.5, 0.2], &[-7.0, 9.0]]), &y, 0.0).unwrap();
    assert_eq!(base.grad.data()[..2], moved.grad.data()[..2]);
    // with λ > 0 the coupling is visible
    let base = ncl_loss(&heads(&[&[0.5, 0.2], &[2.0, 3.0]]), &y, 0.01).unwrap();
    let moved = ncl_loss(&heads(&[&[0.5, 0.2], &[-7.0, 9.0]]), &y, 0.01).unwrap();
    assert_ne!(base.grad.data()[..2], moved.grad.data()[..2]);
}

#[test]
fn generalized_examples() {
    let h = heads(&[&[0.3, 1.0], &[-1.0, 2.0], &[2.5, 0.0]]);
    let y = col(&[0.5, 1.5]);
    let a = ncl_loss(&h, &y, 0.007).unwrap();
    let b = generalized_ncl_loss(LossKind::L2, &h, &y, 0.007, MeanGradient::Full).unwrap();
    assert_eq!(a, b);

    let s = generalized_ncl_loss(
        LossKind::smooth_l1(),
        &heads(&[&[2.0]]),
        &col(&[0.0]),
        0.0,
        MeanGradient::Full,
    )
    .unwrap();
    assert_eq!(s.per_head, vec![1.5]);

    let t = generalized_ncl_loss(
        LossKind::tukey(),
        &heads(&[&[1.0, 1.0, 1.0], &[3.0, 3.0, 3.0]]),
        &col(&[0.0, 0.0, 0.0]),
        0.005,
        MeanGradient::Full,
    )
    .unwrap();
    assert!(t.per_head.iter().all(|v| v.is_finite()));
    assert!(t.grad.data().iter().all(|v| v.is_finite()));
}

#[test]
fn aggregation_examples() {
    let h = heads(&[&[1.0], &[2.0], &[3.0]]);
    assert_eq!(aggregate(&h, &Aggregator::Uniform).unwrap().data(), &[2.0]);
    let w = Aggregator::Weighted(Tensor::vector(vec![1.0, 0.0, 0.0]));
    assert_eq!(aggregate(&h, &w).unwrap().data(), &[1.0]);
    let u = aggregate(&h, &Aggregator::weighted_uniform(3)).unwrap();
    assert!((u.data()[0] - 2.0).abs() < 1e-12);
    let bad = Aggregator::Weighted(Tensor::vector(vec![1.0, 0.0]));
    assert!(aggregate(&h, &bad).is_err());
}

fn identity_head(value_weight: f64, block: usize) -> Network {
    Network::from_layers(
        block,
        vec![Layer::Dense(Dense {
            weights: Tensor::new(vec![1, block], vec![value_weight; block]).unwrap(),
            bias: Tensor::vector(vec![0.0]),
        })],
    )
}

#[test]
fn two_constant_heads_average_to_two() {
    // trunk outputs constant features [1, 1]; heads read one each and scale by 1 and 3
    let trunk = Network::from_layers(
        1,
        vec![Layer::Dense(Dense {
            weights: Tensor::zeros(&[2, 1]),
            bias: Tensor::vector(vec![1.0, 1.0]),
        })],
    );
    let m = NclEnsemble::from_parts(
        trunk,
        vec![identity_head(1.0, 1), identity_head(3.0, 1)],
        0.0,
        Aggregator::Uniform,
    )
    .unwrap();
    let out = m.forward(&col(&[5.0])).unwrap();
    assert_eq!(out.per_head.data(), &[1.0, 3.0]);
    assert_eq!(out.mean.data(), &[2.0]);
}

#[test]
fn indivisible_width_is_rejected() {
    let specs = [LayerSpec::Dense { in_dim: 2, out_dim: 5 }];
    let err = NclEnsemble::new(2, &specs, 2, 1, 0.0, false, &mut Rng::new(0)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

fn model(k: usize, width: usize, weighted: bool, seed: u64) -> NclEnsemble {
    let specs = [
        LayerSpec::Dense { in_dim: 3, out_dim: 6 },
        LayerSpec::Activation(Activation::Tanh),
        LayerSpec::Dense { in_dim: 6, out_dim: width },
        LayerSpec::Activation(Activation::Tanh),
    ];
    NclEnsemble::new(3, &specs, k, 2, 0.005, weighted, &mut Rng::new(seed)).unwrap()
}

fn batch(rng: &mut Rng, n: usize, d: usize) -> Tensor {
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn feature_block_isolation() {
    let m = model(4, 8, false, 3);
    let mut rng = Rng::new(4);
    let feats = batch(&mut rng, 5, 8);
    let base = m.heads_from_features(&feats).unwrap();
    for k in 0..4 {
        let mut zeroed = feats.clone();
        let r = m.block_range(k);
        for row in 0..5 {
            zeroed.row_mut(row)[r.clone()].iter_mut().for_each(|v| *v = 0.0);
        }
        let out = m.heads_from_features(&zeroed).unwrap();
        for j in 0..4 {
            if j == k {
                assert_ne!(out.head(j), base.head(j));
            } else {
                assert_eq!(out.head(j), base.head(j));
            }
        }
    }
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let mut rng = Rng::new(10);
    for (k, kind, lambda, mode) in [
        (1, LossKind::L2, 0.0, MeanGradient::Full),
        (2, LossKind::L2, 0.005, MeanGradient::Full),
        (4, LossKind::L2, 0.3, MeanGradient::Full),
        (4, LossKind::L2, 0.3, MeanGradient::Detached),
        (2, LossKind::SmoothL1 { threshold: 0.5 }, 0.1, MeanGradient::Full),
    ] {
        let m = model(k, 8, false, 20 + k as u64);
        let x = batch(&mut rng, 6, 3);
        let y = batch(&mut rng, 6, 2);
        let eval = batch_gradients(&m, &x, &y, kind, lambda, mode).unwrap();
        let analytic: Vec<f64> = eval.grads.iter().flat_map(|t| t.data().to_vec()).collect();
        let mut probe = m.clone();
        let numeric = numeric_gradient(&m.flat_params(), 1e-6, |p| {
            probe.set_flat_params(p).unwrap();
            batch_gradients(&probe, &x, &y, kind, lambda, mode).unwrap().objective()
        });
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "k={k} {kind:?} λ={lambda}: err = {err}");
    }
}

#[test]
fn aggregator_weight_gradient_matches_finite_differences() {
    let m = model(4, 8, true, 31);
    let mut rng = Rng::new(32);
    let x = batch(&mut rng, 5, 3);
    let y = batch(&mut rng, 5, 2);
    let eval = batch_gradients(&m, &x, &y, LossKind::L2, 0.005, MeanGradient::Full).unwrap();
    let analytic = eval.grads.last().unwrap().data().to_vec();
    let flat = m.flat_params();
    let offset = flat.len() - 4;
    let mut probe = m.clone();
    let numeric = numeric_gradient(&flat[offset..], 1e-6, |w| {
        let mut p = flat.clone();
        p[offset..].copy_from_slice(w);
        probe.set_flat_params(&p).unwrap();
        batch_gradients(&probe, &x, &y, LossKind::L2, 0.005, MeanGradient::Full)
            .unwrap()
            .aggregator_loss
    });
    assert!(max_relative_error(&analytic, &numeric) < 1e-6);
}

fn regression_data(seed: u64, n: usize) -> Dataset {
    let mut rng = Rng::new(seed);
    let x = batch(&mut rng, n, 3);
    let y: Vec<f64> = (0..n)
        .flat_map(|r| {
            let row = x.row(r);
            [row[0] * row[1] + 0.5 * row[2], (2.0 * row[0]).sin()]
        })
        .collect();
    Dataset::new("reg", x, Tensor::new(vec![n, 2], y).unwrap()).unwrap()
}

#[test]
fn k1_lambda0_training_equals_plain_network_training() {
    let data = regression_data(5, 40);
    let trunk_specs = [
        LayerSpec::Dense { in_dim: 3, out_dim: 6 },
        LayerSpec::Activation(Activation::Tanh),
    ];
    let mut ens = NclEnsemble::new(3, &trunk_specs, 1, 2, 0.0, false, &mut Rng::new(8)).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 7,
        lambda: 0.0,
        seed: 77,
        ..TrainConfig::default()
    };

    // Same parameters as one stacked network.
    let mut layers = ens.trunk().layers().to_vec();
    layers.extend(ens.heads()[0].layers().iter().cloned());
    let mut plain = Network::from_layers(3, layers);
    let mut state = OptimState::new(&plain.param_shapes());
    let mut rng = Rng::new(cfg.seed);
    for _ in 0..cfg.epochs {
        let order = rng.permutation(data.len());
        for idx in order.chunks(cfg.batch_size) {
            let x = data.features.select_rows(idx);
            let y = data.targets.select_rows(idx);
            let trace = plain.forward(&x).unwrap();
            let inv_n = 1.0 / idx.len() as f64;
            let g: Vec<f64> = trace
                .output()
                .data()
                .iter()
                .zip(y.data())
                .map(|(o, t)| (o - t) * inv_n)
                .collect();
            let g = Tensor::new(y.shape().to_vec(), g).unwrap();
            let (grads, _) = plain.backward(&trace, &g).unwrap();
            sgd_step(&mut plain.params_mut(), &grads.0, &mut state, &cfg.sgd).unwrap();
        }
    }

    train(&mut ens, &data, &cfg).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(ens.flat_params()), bits(plain.flat_params()));
}

#[test]
fn training_reduces_error_and_is_deterministic() {
    let data = regression_data(6, 64);
    let specs = [
        LayerSpec::Dense { in_dim: 3, out_dim: 12 },
        LayerSpec::Activation(Activation::Tanh),
    ];
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 8,
        seed: 1,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = NclEnsemble::new(3, &specs, 3, 2, 0.0, false, &mut Rng::new(2)).unwrap();
        let out = train(&mut m, &data, &cfg).unwrap();
        (m, out)
    };
    let (m1, o1) = run();
    let (m2, o2) = run();
    assert_eq!(m1, m2);
    assert_eq!(o1.log.to_csv(), o2.log.to_csv());
    let first = o1.log.rows.first().unwrap().ensemble_mse;
    let last = o1.log.rows.last().unwrap().ensemble_mse;
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert_eq!(o1.log.rows.len(), 60);
    assert!(o1.log.to_csv().starts_with("epoch,mean_head_loss,ensemble_mse,diversity\n"));
}

#[test]
fn weighted_aggregation_trains() {
    let data = regression_data(7, 48);
    let specs = [
        LayerSpec::Dense { in_dim: 3, out_dim: 8 },
        LayerSpec::Activation(Activation::Tanh),
    ];
    let mut m = NclEnsemble::new(3, &specs, 4, 2, 0.0, true, &mut Rng::new(3)).unwrap();
    let before = m.aggregator().clone();
    let cfg = TrainConfig { epochs: 20, batch_size: 8, ..TrainConfig::default() };
    train(&mut m, &data, &cfg).unwrap();
    assert_ne!(&before, m.aggregator());
}

#[test]
fn divergence_aborts_with_finite_checkpoint() {
    let data = regression_data(8, 32);
    let specs = [LayerSpec::Dense { in_dim: 3, out_dim: 4 }];
    let mut m = NclEnsemble::new(3, &specs, 2, 2, 0.0, false, &mut Rng::new(4)).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 32,
        sgd: dncl::netcore::SgdConfig { lr: 1e6, momentum: 0.9, weight_decay: 0.0 },
        lambda: 0.0,
        ..TrainConfig::default()
    };
    match train(&mut m, &data, &cfg) {
        Err(Error::Diverged { checkpoint, .. }) => {
            let (restored, _) = NclEnsemble::from_checkpoint(&checkpoint).unwrap();
            assert!(restored.flat_params().iter().all(|v| v.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn ensemble_checkpoint_roundtrip() {
    let m = model(2, 8, true, 40);
    let mut state = OptimState::new(&m.param_shapes());
    state.step = 3;
    let bytes = m.to_checkpoint(&state);
    let (m2, s2) = NclEnsemble::from_checkpoint(&bytes).unwrap();
    assert_eq!(m, m2);
    assert_eq!(state, s2);
}

#[test]
fn invalid_config_rejected() {
    let data = regression_data(9, 8);
    let mut m = model(2, 8, false, 1);
    for cfg in [
        TrainConfig { lambda: 1.0, ..TrainConfig::default() },
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { lambda: -0.1, ..TrainConfig::default() },
    ] {
        assert!(train(&mut m, &data, &cfg).is_err());
    }
}

// --- scalar dynamics -------------------------------------------------------

#[test]
fn lambda_zero_dynamics_follow_closed_form() {
    let toy = gen_scalar_toy(&ScalarToySpec::default()).unwrap();
    let rows = scalar_descent(&toy.inits, -1.5, 0.1, 30, 0.0).unwrap();
    assert_eq!(rows.len(), 31);
    for (i, f0) in toy.inits.iter().enumerate() {
        let expected = -1.5 + 0.9f64.powi(30) * (f0 + 1.5);
        assert!((rows[30][i] - expected).abs() < 1e-12);
    }
}

#[test]
fn single_regressor_ignores_lambda() {
    let a = scalar_descent(&[0.7], -1.5, 0.1, 30, 0.0).unwrap();
    let b = scalar_descent(&[0.7], -1.5, 0.1, 30, 0.009).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mean_follows_lambda_zero_recurrence() {
    let toy = gen_scalar_toy(&ScalarToySpec { seed: 11, ..ScalarToySpec::default() }).unwrap();
    let m0: f64 = toy.inits.iter().sum::<f64>() / 6.0;
    for lambda in [0.0, 1e-3, 5e-3, 1e-2, 0.2] {
        let rows = scalar_descent(&toy.inits, -1.5, 0.1, 30, lambda).unwrap();
        for (n, row) in rows.iter().enumerate() {
            let mean = row.iter().sum::<f64>() / 6.0;
            let expected = -1.5 + 0.9f64.powi(n as i32) * (m0 + 1.5);
            assert!((mean - expected).abs() < 1e-9, "λ={lambda} n={n}");
        }
    }
}

#[test]
fn spread_is_monotone_in_lambda() {
    for seed in 0..5 {
        let toy = gen_scalar_toy(&ScalarToySpec { seed, ..ScalarToySpec::default() }).unwrap();
        let spreads: Vec<f64> = [0.0, 1e-3, 5e-3, 1e-2]
            .iter()
            .map(|&l| mean_pairwise_spread(&scalar_descent(&toy.inits, -1.5, 0.1, 30, l).unwrap()[30]))
            .collect();
        assert!(spreads.windows(2).all(|w| w[1] >= w[0]), "{spreads:?}");
        assert!(spreads[2] > spreads[0]);
        // spread agrees with the diversity matrix up to the vector norm of a 1-sample head
        let rows = scalar_descent(&toy.inits, -1.5, 0.1, 30, 5e-3).unwrap();
        let m = Tensor::new(vec![6, 1], rows[30].clone()).unwrap();
        let d = pairwise_diversity(&m).unwrap().mean_pairwise();
        assert!((d - spreads[2]).abs() < 1e-12);
    }
}
