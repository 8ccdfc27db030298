use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udae::engine::gradient_check;
use udae::metrics::{composite_loss_grad, LossConfig, SsimParams};
use udae::unet::{backward, build_model, forward, infer, load_weights, save_weights};
use udae::{Error, ModelWeights, Tensor, UNetConfig};

#[test]
fn output_shape_matches_input_for_all_depths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for depth in 1..=4 {
        let model = build_model(UNetConfig::new(depth, 4).unwrap(), depth as u64).unwrap();
        for size in [32, 64, 128] {
            let x = Tensor::<f32>::random_uniform([1, 3, size, size], 0.0, 1.0, &mut rng);
            let y = infer(&model, &x).unwrap();
            assert_eq!(y.shape(), x.shape(), "depth {depth} size {size}");
            assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn depth_one_base_four_parameter_count() {
    // 3x3 conv: 9*in*out + out; 2x2 up-conv: 4*in*out + out; 1x1: in*out + out
    let encoder = (9 * 3 * 4 + 4) + (9 * 4 * 4 + 4);
    let bottleneck = (9 * 4 * 8 + 8) + (9 * 8 * 8 + 8);
    let decoder = (4 * 8 * 4 + 4) + (9 * 8 * 4 + 4) + 2 * (9 * 4 * 4 + 4);
    let head = 4 * 3 + 3;
    let expected = encoder + bottleneck + decoder + head;
    assert_eq!(expected, 1875);
    let cfg = UNetConfig::new(1, 4).unwrap();
    assert_eq!(cfg.param_count(), expected);
    assert_eq!(build_model(cfg, 0).unwrap().param_count(), expected);
}

#[test]
fn indivisible_sizes_are_rejected() {
    let model = build_model(UNetConfig::new(3, 4).unwrap(), 0).unwrap();
    let x = Tensor::<f32>::zeros([1, 3, 36, 32]);
    assert!(matches!(infer(&model, &x), Err(Error::Indivisible { .. })));
    let x = Tensor::<f32>::zeros([1, 1, 32, 32]);
    assert!(infer(&model, &x).is_err());
}

#[test]
fn same_seed_same_weights() {
    let cfg = UNetConfig::new(2, 4).unwrap();
    assert_eq!(build_model(cfg, 5).unwrap(), build_model(cfg, 5).unwrap());
    assert_ne!(build_model(cfg, 5).unwrap(), build_model(cfg, 6).unwrap());
}

#[test]
fn tape_forward_equals_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = build_model(UNetConfig::new(2, 4).unwrap(), 1).unwrap();
    let x = Tensor::<f32>::random_uniform([2, 3, 16, 16], 0.0, 1.0, &mut rng);
    let fwd = forward(&model, &x, true).unwrap();
    assert_eq!(fwd.output, infer(&model, &x).unwrap());
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.udae");
    let model = build_model(UNetConfig::new(2, 4).unwrap(), 2).unwrap();
    save_weights(&model, &path).unwrap();
    let back = load_weights(&path).unwrap();
    let x = Tensor::<f32>::full([1, 3, 16, 16], 0.3);
    assert_eq!(infer(&model, &x).unwrap(), infer(&back, &x).unwrap());
}

#[test]
fn full_network_gradient_with_composite_loss() {
    let cfg = UNetConfig::new(1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut model: ModelWeights<f64> = build_model(cfg, 11).unwrap().cast();
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let input = Tensor::<f64>::random_uniform([1, 3, 16, 16], 0.0, 1.0, &mut rng);
    let target = Tensor::<f64>::random_uniform([1, 3, 16, 16], 0.0, 1.0, &mut rng);
    let (loss_cfg, ssim) = (LossConfig::default(), SsimParams::default());
    let params = model.to_flat();
    let report = gradient_check(
        |p| {
            let w = ModelWeights::from_flat(cfg, p)?;
            let fwd = forward(&w, &input, true)?;
            let (loss, g) = composite_loss_grad(&fwd.output, &target, &loss_cfg, &ssim)?;
            let grads = backward(&w, fwd.tape.as_ref(), &g)?;
            Ok((loss.value, grads.to_flat()))
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert_eq!(report.checked, cfg.param_count());
    assert!(report.max_relative_error < 1e-3, "{report:?}");
}

#[test]
fn network_check_holds_across_seeds() {
    let cfg = UNetConfig::new(1, 2).unwrap();
    for seed in 0..4 {
        let r = udae::train::network_gradient_check(cfg, 16, 0.8, 1e-4, seed).unwrap();
        assert!(r.checked + r.excluded == cfg.param_count());
        assert!(r.checked > cfg.param_count() / 2, "seed {seed}: {r:?}");
        assert!(r.max_relative_error < 1e-3, "seed {seed}: {r:?}");
    }
}
