use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use udae::degrade::{
    build_dataset, degrade, load_manifest, load_split, procedural_scene, resize_area, sample_params, split_of,
    DegradationParams, Preset, Split, BLUISH, GREENISH, TURBID,
};
use udae::Tensor;

fn params(beta: [f64; 3], ambient: [f64; 3]) -> DegradationParams {
    DegradationParams {
        beta,
        ambient,
        ..DegradationParams::identity()
    }
}

#[test]
fn null_degradation_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::random_uniform([2, 3, 9, 7], 0.0, 1.0, &mut rng);
    assert_eq!(degrade(&x, &DegradationParams::identity()).unwrap(), x);
    let x = x.cast::<f64>();
    assert_eq!(degrade(&x, &DegradationParams::identity()).unwrap(), x);
}

#[test]
fn full_attenuation_gives_ambient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::<f32>::random_uniform([1, 3, 8, 8], 0.0, 1.0, &mut rng);
    let ambient = [0.1, 0.45, 0.6];
    let out = degrade(&x, &params([100.0; 3], ambient)).unwrap();
    for (c, &a) in ambient.iter().enumerate() {
        assert!(out.plane(0, c).iter().all(|&v| v == a as f32));
    }
}

#[test]
fn uniform_grey_closed_form() {
    let x = Tensor::<f64>::full([1, 3, 4, 4], 0.5);
    let (beta, ambient) = ([0.9, 0.3, 0.1], [0.05, 0.35, 0.45]);
    let out = degrade(&x, &params(beta, ambient)).unwrap();
    for c in 0..3 {
        let t = (-beta[c]).exp();
        let want = 0.5 * t + ambient[c] * (1.0 - t);
        assert!(out.plane(0, c).iter().all(|v| (v - want).abs() < 1e-12));
    }
    assert!((out.at(0, 0, 0, 0) - (0.5 * (-0.9f64).exp() + 0.05 * (1.0 - (-0.9f64).exp()))).abs() < 1e-12);
}

#[test]
fn contrast_loss_pulls_to_channel_mean() {
    let x = Tensor::<f64>::from_fn([1, 3, 4, 4], |_, c, y, x| (c + y * 4 + x) as f64 / 24.0);
    let p = DegradationParams {
        contrast_loss: 1.0,
        ..DegradationParams::identity()
    };
    let out = degrade(&x, &p).unwrap();
    for c in 0..3 {
        let mean = x.plane(0, c).iter().sum::<f64>() / 16.0;
        assert!(out.plane(0, c).iter().all(|v| (v - mean).abs() < 1e-12));
    }
    let half = DegradationParams {
        contrast_loss: 0.5,
        ..DegradationParams::identity()
    };
    let out = degrade(&x, &half).unwrap();
    let spread = |t: &Tensor<f64>| t.plane(0, 0)[15] - t.plane(0, 0)[0];
    assert!((spread(&out) - 0.5 * spread(&x)).abs() < 1e-12);
}

#[test]
fn noise_is_seeded_and_clamped() {
    let x = Tensor::<f32>::full([1, 3, 16, 16], 0.98);
    let p = DegradationParams {
        noise_sigma: 0.1,
        seed: 5,
        ..DegradationParams::identity()
    };
    let a = degrade(&x, &p).unwrap();
    assert_eq!(a, degrade(&x, &p).unwrap());
    assert_ne!(a, degrade(&x, &DegradationParams { seed: 6, ..p.clone() }).unwrap());
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(a.data().contains(&1.0));
}

#[test]
fn invalid_parameters_rejected() {
    let x = Tensor::<f32>::zeros([1, 3, 2, 2]);
    for p in [
        params([-0.1, 0.0, 0.0], [0.0; 3]),
        params([0.0; 3], [1.5, 0.0, 0.0]),
        DegradationParams {
            depth_scale: 0.0,
            ..DegradationParams::identity()
        },
        DegradationParams {
            contrast_loss: 1.1,
            ..DegradationParams::identity()
        },
        DegradationParams {
            noise_sigma: f64::NAN,
            ..DegradationParams::identity()
        },
    ] {
        assert!(degrade(&x, &p).is_err(), "{p:?}");
    }
    assert!(degrade(&Tensor::<f32>::zeros([1, 1, 2, 2]), &DegradationParams::identity()).is_err());
}

#[test]
fn presets_are_deterministic_and_in_range() {
    for preset in Preset::ALL {
        assert_eq!(sample_params(9, preset), sample_params(9, preset));
        assert_eq!(preset.to_string().parse::<Preset>().unwrap(), preset);
    }
    for seed in 0..1000 {
        let g = sample_params(seed, Preset::Greenish);
        assert!(GREENISH.contains(&g));
        assert!(g.beta[0] > g.beta[2]);
        let m = sample_params(seed, Preset::Mixed);
        assert!([&GREENISH, &BLUISH, &TURBID].iter().any(|r| r.contains(&m)), "{m:?}");
        assert!(m.validate().is_ok());
        assert!(BLUISH.contains(&sample_params(seed, Preset::Bluish)));
        assert!(TURBID.contains(&sample_params(seed, Preset::Turbid)));
    }
    assert!("murky".parse::<Preset>().is_err());
}

/// Exact area average: repeat each source sample `n_out` times, then average
/// runs of `n_in`.
fn area_oracle(img: &Tensor<f64>, oh: usize, ow: usize) -> Tensor<f64> {
    let s = img.shape();
    Tensor::from_fn([s.batch, s.channels, oh, ow], |b, c, y, x| {
        let mut acc = 0.0;
        for sy in y * s.height..(y + 1) * s.height {
            for sx in x * s.width..(x + 1) * s.width {
                acc += img.at(b, c, sy / oh, sx / ow);
            }
        }
        acc / (s.height * s.width) as f64
    })
}

#[test]
fn checkerboard_block_means() {
    let board = Tensor::<f64>::from_fn([1, 3, 4, 4], |_, _, y, x| ((y + x) % 2) as f64);
    let out = resize_area(&board, 2, 2).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));
}

#[test]
fn resize_identity_and_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::<f32>::random_uniform([1, 3, 12, 9], 0.0, 1.0, &mut rng);
    assert_eq!(resize_area(&x, 12, 9).unwrap(), x);
    let k = Tensor::<f64>::full([1, 3, 12, 12], 0.37);
    for (h, w) in [(6, 6), (4, 3), (5, 7), (20, 30)] {
        assert!(resize_area(&k, h, w).unwrap().data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }
    assert!(resize_area(&x, 0, 3).is_err());
}

proptest! {
    #[test]
    fn area_resize_matches_oracle(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, oh in 1usize..20, ow in 1usize..20) {
        let (oh, ow) = (oh.min(h), ow.min(w));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::random_uniform([1, 2, h, w], 0.0, 1.0, &mut rng);
        let got = resize_area(&x, oh, ow).unwrap();
        let want = area_oracle(&x, oh, ow);
        for (a, b) in got.data().iter().zip(want.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degrade_stays_in_unit_range(seed in any::<u64>(), preset in 0usize..4) {
        let p = sample_params(seed, Preset::ALL[preset]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f32>::random_uniform([1, 3, 8, 8], 0.0, 1.0, &mut rng);
        let out = degrade(&x, &p).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(out, degrade(&x, &p).unwrap());
    }

    #[test]
    fn stronger_attenuation_moves_toward_ambient(v in 0.0f64..=1.0, amb in 0.0f64..=1.0, b1 in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let x = Tensor::<f64>::full([1, 3, 3, 3], v);
        let lo = degrade(&x, &params([b1; 3], [amb; 3])).unwrap();
        let hi = degrade(&x, &params([b1 + extra; 3], [amb; 3])).unwrap();
        for (a, b) in lo.data().iter().zip(hi.data()) {
            prop_assert!((b - amb).abs() <= (a - amb).abs() + 1e-15);
            prop_assert!((b - amb) * (a - amb) >= 0.0);
        }
    }
}

#[test]
fn split_is_a_stable_80_10_10() {
    let ids: Vec<String> = (0..10_000).map(|i| format!("{i:05}")).collect();
    let count = |s: Split| ids.iter().filter(|id| split_of(id) == s).count();
    assert!((7_800..=8_200).contains(&count(Split::Train)));
    assert!((900..=1_100).contains(&count(Split::Val)));
    assert!((900..=1_100).contains(&count(Split::Test)));
    assert_eq!(split_of("00042"), split_of("00042"));
}

#[test]
fn procedural_scenes_are_deterministic() {
    let a = procedural_scene(4, 32, 24).unwrap();
    assert_eq!(a.shape().dims(), [1, 3, 32, 24]);
    assert_eq!(a, procedural_scene(4, 32, 24).unwrap());
    assert_ne!(a, procedural_scene(5, 32, 24).unwrap());
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn dataset_build_and_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let m = build_dataset(None, &a, 10, 16, Preset::Mixed, 7).unwrap();
    assert_eq!(m.entries.len(), 10);
    for e in &m.entries {
        assert!(a.join(format!("{}_clean.png", e.id)).exists());
        assert!(a.join(format!("{}_distorted.png", e.id)).exists());
        assert_eq!(e.split, split_of(&e.id));
    }
    build_dataset(None, &b, 10, 16, Preset::Mixed, 7).unwrap();
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    assert_eq!(read(&a, "00003_distorted.png"), read(&b, "00003_distorted.png"));
    assert_eq!(load_manifest(&a).unwrap(), m);

    let total: usize = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|s| load_split(&a, s).unwrap().len())
        .sum();
    assert_eq!(total, 10);
    let train = load_split(&a, Split::Train).unwrap();
    assert!(train.iter().all(|p| p.clean.shape() == p.distorted.shape() && p.clean.shape().height == 16));
}

#[test]
fn dataset_from_directory_skips_bad_files_and_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    for (i, seed) in [1u64, 2].iter().enumerate() {
        let img = udae::image_io::from_tensor(&procedural_scene(*seed, 40, 30).unwrap(), 0).unwrap();
        udae::image_io::write_png(&img, src.join(format!("img{i}.png"))).unwrap();
    }
    std::fs::write(src.join("broken.png"), b"garbage").unwrap();
    std::fs::write(src.join("notes.txt"), b"ignored").unwrap();
    let out = dir.path().join("out");
    let m = build_dataset(Some(&src), &out, 5, 20, Preset::Greenish, 1).unwrap();
    assert_eq!(m.entries.len(), 5);
    assert_eq!(m.skipped.len(), 1);
    assert_eq!(m.skipped[0].file, "broken.png");
    let read = |f: &str| std::fs::read(out.join(f)).unwrap();
    assert_eq!(read("00000_clean.png"), read("00002_clean.png"));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert!(build_dataset(Some(&empty), &out, 5, 20, Preset::Greenish, 1).is_err());
    assert!(build_dataset(None, &out, 0, 20, Preset::Greenish, 1).is_err());
}
