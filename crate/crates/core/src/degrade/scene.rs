use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::resize::resize_area;
use crate::engine::Tensor;
use crate::Result;

fn colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Smooth coloured noise: a coarse random grid upsampled bilinearly.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<Tensor<f64>> {
    let cells = rng.random_range(3..=8);
    let coarse = Tensor::<f64>::random_uniform([1, 3, cells, cells], 0.0, 1.0, rng);
    resize_area(&coarse, h, w)
}

/// A deterministic synthetic RGB scene, `1 x 3 x height x width`, in `[0, 1]`.
///
/// Every scene has a colour gradient background; the seed then selects
/// shapes, a checkerboard, smooth coloured noise or all of them.
pub fn procedural_scene(seed: u64, height: usize, width: usize) -> Result<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1) = (colour(&mut rng), colour(&mut rng));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let (hf, wf) = (height as f64, width as f64);
    let mut img = Tensor::<f64>::from_fn([1, 3, height, width], |_, c, y, x| {
        let u = (x as f64 / wf - 0.5) * dx + (y as f64 / hf - 0.5) * dy + 0.5;
        let u = u.clamp(0.0, 1.0);
        c0[c] * (1.0 - u) + c1[c] * u
    });
    let kind = rng.random_range(0..4);
    if kind == 1 || kind == 3 {
        let cell = rng.random_range(4..=16usize);
        let (a, b) = (colour(&mut rng), colour(&mut rng));
        let mix: f64 = rng.random_range(0.3..0.8);
        img = Tensor::from_fn(img.shape(), |_, c, y, x| {
            let tile = if (y / cell + x / cell) % 2 == 0 { a[c] } else { b[c] };
            img.at(0, c, y, x) * (1.0 - mix) + tile * mix
        });
    }
    if kind == 2 || kind == 3 {
        let noise = value_noise(&mut rng, height, width)?;
        let mix: f64 = rng.random_range(0.3..0.7);
        img = Tensor::from_fn(img.shape(), |_, c, y, x| {
            img.at(0, c, y, x) * (1.0 - mix) + noise.at(0, c, y, x) * mix
        });
    }
    if kind == 0 || kind == 3 {
        for _ in 0..rng.random_range(3..=8) {
            let col = colour(&mut rng);
            let (cy, cx) = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
            let r = rng.random_range(0.08..0.3) * hf.min(wf);
            let circle = rng.random_bool(0.5);
            let data = img.data_mut();
            for c in 0..3 {
                for y in 0..height {
                    for x in 0..width {
                        let (ey, ex) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                        let inside = if circle {
                            ey * ey + ex * ex <= r * r
                        } else {
                            ey.abs() <= r && ex.abs() <= 0.6 * r
                        };
                        if inside {
                            data[(c * height + y) * width + x] = col[c];
                        }
                    }
                }
            }
        }
    }
    Ok(img.map(|v| v.clamp(0.0, 1.0)).cast())
}
