use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{gradient_check_excluding_ties, GradCheck, Tensor};
use crate::metrics::{composite_loss_grad, LossConfig, SsimParams};
use crate::unet::{backward, build_model, forward, infer, ModelWeights, UNetConfig};
use crate::Result;

/// Finite-difference check of the whole network under the composite loss,
/// in `f64`, on one random `size x size` image.
///
/// Biases are randomised so no unit starts exactly at a ReLU kink. The target
/// is the initial output shifted by at least 0.05 per pixel, which keeps the
/// L1 term away from its kink and the SSIM term well inside its unclamped
/// range. Probes that flip a ReLU, max-pool or L1 decision are excluded.
pub fn network_gradient_check(config: UNetConfig, size: usize, alpha: f64, h: f64, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model: ModelWeights<f64> = build_model(config, seed)?.cast();
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let shape = [1, config.in_channels, size, size];
    let input = Tensor::<f64>::random_uniform(shape, 0.0, 1.0, &mut rng);
    let start = infer(&model, &input)?;
    let offsets: Vec<f64> = (0..start.len())
        .map(|_| {
            let m = rng.random_range(0.05..0.2);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    let target = Tensor::from_vec(
        start.shape(),
        start
            .data()
            .iter()
            .zip(&offsets)
            .map(|(o, d)| if (o + d).clamp(0.0, 1.0) == o + d { o + d } else { o - d })
            .collect(),
    )?;
    let (loss_cfg, ssim) = (LossConfig::new(alpha)?, SsimParams::default());
    gradient_check_excluding_ties(
        |p| {
            let w = ModelWeights::from_flat(config, p)?;
            let fwd = forward(&w, &input, true)?;
            let tape = fwd.tape.as_ref().expect("recorded");
            let (loss, g) = composite_loss_grad(&fwd.output, &target, &loss_cfg, &ssim)?;
            let mut regime = tape.regime();
            for (o, t) in fwd.output.data().iter().zip(target.data()) {
                regime = (regime ^ (o > t) as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
            let grads = backward(&w, Some(tape), &g)?;
            Ok((loss.value, grads.to_flat(), regime))
        },
        &model.to_flat(),
        h,
    )
}
