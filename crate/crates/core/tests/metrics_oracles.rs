use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udae::engine::gradient_check;
use udae::metrics::{
    composite_loss, composite_loss_grad, l1_loss, l1_loss_grad, ms_ssim, ms_ssim_grad, mse, ssim, ssim_grad,
    LossConfig, SsimParams,
};
use udae::Tensor;

/// Straightforward SSIM: explicit 2-D Gaussian window, centred moments, one
/// window position at a time.
fn ssim_direct(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (k, sigma) = (11usize, 1.5f64);
    let mut w2 = vec![0.0; k * k];
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            w2[i * k + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += w2[i * k + j];
        }
    }
    w2.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let s = a.shape();
    let mut plane_means = Vec::new();
    for n in 0..s.batch {
        for c in 0..s.channels {
            let mut acc = 0.0;
            let mut count = 0;
            for y0 in 0..=s.height - k {
                for x0 in 0..=s.width - k {
                    let (mut mx, mut my) = (0.0, 0.0);
                    for i in 0..k {
                        for j in 0..k {
                            mx += w2[i * k + j] * a.at(n, c, y0 + i, x0 + j);
                            my += w2[i * k + j] * b.at(n, c, y0 + i, x0 + j);
                        }
                    }
                    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                    for i in 0..k {
                        for j in 0..k {
                            let dx = a.at(n, c, y0 + i, x0 + j) - mx;
                            let dy = b.at(n, c, y0 + i, x0 + j) - my;
                            vx += w2[i * k + j] * dx * dx;
                            vy += w2[i * k + j] * dy * dy;
                            cov += w2[i * k + j] * dx * dy;
                        }
                    }
                    acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
            plane_means.push(acc / count as f64);
        }
    }
    plane_means.iter().sum::<f64>() / plane_means.len() as f64
}

fn correlated_pair(shape: [usize; 4], noise: f64, rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let a = Tensor::<f64>::random_uniform(shape, 0.05, 0.95, rng);
    let data = a
        .data()
        .iter()
        .map(|v| (v + rng.random_range(-noise..noise)).clamp(0.0, 1.0))
        .collect();
    let b = Tensor::from_vec(shape, data).unwrap();
    (a, b)
}

#[test]
fn ssim_matches_direct_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = SsimParams::default();
    for i in 0..50 {
        let (a, b) = if i % 2 == 0 {
            correlated_pair([1, 1, 16, 16], 0.2, &mut rng)
        } else {
            (
                Tensor::random_uniform([1, 1, 16, 16], 0.0, 1.0, &mut rng),
                Tensor::random_uniform([1, 1, 16, 16], 0.0, 1.0, &mut rng),
            )
        };
        let got = ssim(&a, &b, &p).unwrap();
        let want = ssim_direct(&a, &b);
        assert!((got - want).abs() < 1e-8, "pair {i}: {got} vs {want}");
    }
}

#[test]
fn ssim_oracle_on_colour_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (a, b) = correlated_pair([2, 3, 20, 17], 0.3, &mut rng);
    let got = ssim(&a, &b, &SsimParams::default()).unwrap();
    assert!((got - ssim_direct(&a, &b)).abs() < 1e-8);
}

#[test]
fn identity_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = SsimParams::default();
    let cfg = LossConfig::default();
    for _ in 0..20 {
        let x = Tensor::<f32>::random_uniform([1, 3, 64, 64], 0.0, 1.0, &mut rng);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert!((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-6);
        assert!(composite_loss(&x, &x, &cfg, &p).unwrap().value.abs() < 1e-6);
    }
}

#[test]
fn constant_images_score_one() {
    let x = Tensor::<f64>::full([1, 3, 32, 32], 0.4);
    assert!((ssim(&x, &x, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-12);
    assert!((ms_ssim(&x, &x, &SsimParams::default()).unwrap().value - 1.0).abs() < 1e-12);
}

#[test]
fn alpha_zero_is_pure_l1() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (a, b) = correlated_pair([2, 3, 32, 32], 0.3, &mut rng);
    let loss = composite_loss(&a, &b, &LossConfig::new(0.0).unwrap(), &SsimParams::default()).unwrap();
    assert_eq!(loss.value, l1_loss(&a, &b).unwrap());
}

#[test]
fn alpha_one_is_pure_ms_ssim() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (a, b) = correlated_pair([1, 3, 48, 48], 0.3, &mut rng);
    let p = SsimParams::default();
    let loss = composite_loss(&a, &b, &LossConfig::new(1.0).unwrap(), &p).unwrap();
    assert!((loss.value - (1.0 - ms_ssim(&a, &b, &p).unwrap().value)).abs() < 1e-15);
}

fn check<F>(a: &Tensor<f64>, mut f: F) -> f64
where
    F: FnMut(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    let shape = a.shape();
    let report = gradient_check(
        |p| {
            let t = Tensor::from_vec(shape, p.to_vec())?;
            let (v, g) = f(&t);
            Ok((v, g.into_data()))
        },
        a.data(),
        1e-4,
    )
    .unwrap();
    report.max_relative_error
}

#[test]
fn ssim_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (a, b) = correlated_pair([1, 2, 14, 13], 0.2, &mut rng);
    let p = SsimParams::default();
    let err = check(&a, |t| ssim_grad(t, &b, &p).unwrap());
    assert!(err < 1e-4, "ssim gradient error {err}");
}

#[test]
fn ms_ssim_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (a, b) = correlated_pair([1, 3, 48, 48], 0.2, &mut rng);
    let p = SsimParams::default();
    assert_eq!(ms_ssim(&a, &b, &p).unwrap().scales, 3);
    let err = check(&a, |t| {
        let (m, g) = ms_ssim_grad(t, &b, &p).unwrap();
        (m.value, g)
    });
    assert!(err < 1e-3, "ms-ssim gradient error {err}");
}

#[test]
fn l1_gradient_away_from_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = Tensor::<f64>::random_uniform([1, 3, 6, 6], 0.0, 1.0, &mut rng);
    let b = a.map(|v| if v > 0.5 { v - 0.1 } else { v + 0.1 });
    let err = check(&a, |t| l1_loss_grad(t, &b).unwrap());
    assert!(err < 1e-6, "l1 gradient error {err}");
}

#[test]
fn composite_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (a, _) = correlated_pair([1, 3, 24, 24], 0.2, &mut rng);
    // keep |a - b| well away from zero so L1 has no kinks within the step
    let b = a.map(|v| if v > 0.5 { v - 0.05 - 0.1 * v } else { v + 0.05 + 0.1 * v });
    let (p, cfg) = (SsimParams::default(), LossConfig::default());
    let err = check(&a, |t| {
        let (l, g) = composite_loss_grad(t, &b, &cfg, &p).unwrap();
        (l.value, g)
    });
    assert!(err < 1e-3, "composite gradient error {err}");
}

#[test]
fn gradient_is_zero_at_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = Tensor::<f64>::random_uniform([1, 3, 24, 24], 0.0, 1.0, &mut rng);
    let (_, g) = ssim_grad(&a, &a, &SsimParams::default()).unwrap();
    assert!(g.data().iter().all(|v| v.abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in any::<u64>(), h in 11usize..24, w in 11usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f32>::random_uniform([1, 3, h, w], 0.0, 1.0, &mut rng);
        let b = Tensor::<f32>::random_uniform([1, 3, h, w], 0.0, 1.0, &mut rng);
        let p = SsimParams::default();
        let ab = ssim(&a, &b, &p).unwrap();
        prop_assert_eq!(ab, ssim(&b, &a, &p).unwrap());
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        let ms = ms_ssim(&a, &b, &p).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&ms));
    }

    #[test]
    fn composite_loss_is_nonnegative(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f32>::random_uniform([1, 3, 22, 22], 0.0, 1.0, &mut rng);
        let b = Tensor::<f32>::random_uniform([1, 3, 22, 22], 0.0, 1.0, &mut rng);
        let loss = composite_loss(&a, &b, &LossConfig::new(alpha).unwrap(), &SsimParams::default()).unwrap();
        prop_assert!(loss.value >= 0.0 && loss.value.is_finite());
    }
}
