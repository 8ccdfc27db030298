//! Image quality metrics and the training loss.
//!
//! All metrics accumulate in `f64` regardless of the tensor element type.
//! Colour images are scored per `(batch, channel)` plane and averaged.
//! Gradients are taken with respect to the first argument.

mod ssim;

use serde::{Deserialize, Serialize};

use crate::engine::{Element, Tensor};
use crate::{par, Error, Result};

pub use ssim::gaussian_window;
use ssim::{Plane, SsimWindow};

/// Standard SSIM/MS-SSIM constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values.
    pub data_range: f64,
    /// Finest-first weights; their count is the maximum number of scales.
    pub scale_weights: Vec<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        let raw = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
        let total: f64 = raw.iter().sum();
        SsimParams {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
            scale_weights: raw.iter().map(|w| w / total).collect(),
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || !(self.sigma > 0.0) || !(self.data_range > 0.0) {
            return Err(Error::Parameter(format!("SSIM window/range: {self:?}")));
        }
        if self.scale_weights.is_empty() || self.scale_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Parameter("MS-SSIM scale weights".into()));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// Number of scales usable on an image whose shorter side is `min_side`:
    /// the largest `s` with `window * 2^(s-1) <= min_side`, capped at the
    /// configured count.
    pub fn scales_for(&self, min_side: usize) -> usize {
        let mut s = 0;
        while s < self.scale_weights.len() && self.window_size << s <= min_side {
            s += 1;
        }
        s
    }

    /// The first `scales` weights renormalised to sum to one.
    pub fn weights_for(&self, scales: usize) -> Vec<f64> {
        let w = &self.scale_weights[..scales];
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }
}

/// Weighting of the MS-SSIM and L1 terms of the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.80 }
    }
}

impl LossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = LossConfig { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// MS-SSIM value and the pyramid it was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsSsim {
    pub value: f64,
    pub scales: usize,
    pub weights: Vec<f64>,
}

/// Value of the composite loss and its two components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoss {
    pub value: f64,
    pub ms_ssim: MsSsim,
    pub l1: f64,
}

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty(format!("{op} of empty tensors")));
    }
    Ok(())
}

/// Mean squared difference.
pub fn mse<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape("mse", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Mean absolute difference.
pub fn l1_loss<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape("l1_loss", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

fn l1_grad<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Vec<f64> {
    let n = a.len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

fn to_tensor<T: Element>(like: &Tensor<T>, grad: Vec<f64>) -> Tensor<T> {
    Tensor::from_vec(like.shape(), grad.into_iter().map(T::from_f64_lossy).collect())
        .expect("gradient has the tensor's length")
}

/// L1 loss and its gradient with respect to `a` (zero where `a == b`).
pub fn l1_loss_grad<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let value = l1_loss(a, b)?;
    Ok((value, to_tensor(a, l1_grad(a, b))))
}

fn planes<T: Element>(t: &Tensor<T>) -> Vec<Plane> {
    let s = t.shape();
    (0..s.batch * s.channels)
        .map(|i| Plane::from_slice(&t.data()[i * s.plane()..(i + 1) * s.plane()], s.height, s.width))
        .collect()
}

fn check_window<T: Element>(a: &Tensor<T>, params: &SsimParams) -> Result<()> {
    params.validate()?;
    let s = a.shape();
    if s.height < params.window_size || s.width < params.window_size {
        return Err(Error::ImageTooSmall {
            height: s.height,
            width: s.width,
            window: params.window_size,
        });
    }
    Ok(())
}

fn ssim_impl<T: Element>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams, grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    same_shape("ssim", a, b)?;
    check_window(a, params)?;
    let win = SsimWindow::new(params);
    let (pa, pb) = (planes(a), planes(b));
    let stats = par::map_range(pa.len(), |i| win.stats(&pa[i], &pb[i], grad));
    let n = stats.len() as f64;
    let value = stats.iter().map(|s| s.ssim).sum::<f64>() / n;
    let grad = grad.then(|| {
        stats
            .into_iter()
            .flat_map(|s| s.grad_ssim.expect("requested").into_iter().map(move |g| g / n))
            .collect()
    });
    Ok((value, grad))
}

/// Mean SSIM over all valid window positions and all planes.
pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams) -> Result<f64> {
    Ok(ssim_impl(a, b, params, false)?.0)
}

pub fn ssim_grad<T: Element>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams) -> Result<(f64, Tensor<T>)> {
    let (v, g) = ssim_impl(a, b, params, true)?;
    Ok((v, to_tensor(a, g.expect("requested"))))
}

fn ms_ssim_impl<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    params: &SsimParams,
    grad: bool,
) -> Result<(MsSsim, Option<Vec<f64>>)> {
    same_shape("ms_ssim", a, b)?;
    check_window(a, params)?;
    let s = a.shape();
    let scales = params.scales_for(s.height.min(s.width));
    let weights = params.weights_for(scales);
    let win = SsimWindow::new(params);
    let (pa, pb) = (planes(a), planes(b));
    let per_plane = par::map_range(pa.len(), |i| win.ms_ssim(&pa[i], &pb[i], &weights, grad));
    let n = per_plane.len() as f64;
    let value = per_plane.iter().map(|(v, _)| v).sum::<f64>() / n;
    let grad = grad.then(|| {
        per_plane
            .into_iter()
            .flat_map(|(_, g)| g.expect("requested").into_iter().map(move |v| v / n))
            .collect()
    });
    Ok((
        MsSsim {
            value,
            scales,
            weights,
        },
        grad,
    ))
}

/// Multi-scale SSIM. Images too small for the full pyramid use fewer scales
/// with renormalised weights; the result records which.
pub fn ms_ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams) -> Result<MsSsim> {
    Ok(ms_ssim_impl(a, b, params, false)?.0)
}

pub fn ms_ssim_grad<T: Element>(a: &Tensor<T>, b: &Tensor<T>, params: &SsimParams) -> Result<(MsSsim, Tensor<T>)> {
    let (v, g) = ms_ssim_impl(a, b, params, true)?;
    Ok((v, to_tensor(a, g.expect("requested"))))
}

fn composite_impl<T: Element>(
    output: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
    params: &SsimParams,
    grad: bool,
) -> Result<(CompositeLoss, Option<Vec<f64>>)> {
    cfg.validate()?;
    let (ms, ms_grad) = ms_ssim_impl(output, target, params, grad)?;
    let l1 = l1_loss(output, target)?;
    let alpha = cfg.alpha;
    let value = alpha * (1.0 - ms.value) + (1.0 - alpha) * l1;
    let grad = ms_grad.map(|g| {
        g.iter()
            .zip(l1_grad(output, target))
            .map(|(m, l)| -alpha * m + (1.0 - alpha) * l)
            .collect()
    });
    Ok((
        CompositeLoss {
            value,
            ms_ssim: ms,
            l1,
        },
        grad,
    ))
}

/// `alpha * (1 - MS-SSIM) + (1 - alpha) * L1`; zero for identical images.
pub fn composite_loss<T: Element>(
    output: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
    params: &SsimParams,
) -> Result<CompositeLoss> {
    Ok(composite_impl(output, target, cfg, params, false)?.0)
}

/// [`composite_loss`] plus its gradient with respect to `output`.
pub fn composite_loss_grad<T: Element>(
    output: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
    params: &SsimParams,
) -> Result<(CompositeLoss, Tensor<T>)> {
    let (v, g) = composite_impl(output, target, cfg, params, true)?;
    Ok((v, to_tensor(output, g.expect("requested"))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_params_are_normalised() {
        let p = SsimParams::default();
        assert!((p.scale_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let w = gaussian_window(p.window_size, p.sigma);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_reduction() {
        let p = SsimParams::default();
        assert_eq!(p.scales_for(10), 0);
        assert_eq!(p.scales_for(16), 1);
        assert_eq!(p.scales_for(48), 3);
        assert_eq!(p.scales_for(64), 3);
        assert_eq!(p.scales_for(88), 4);
        assert_eq!(p.scales_for(256), 5);
        let w = p.weights_for(3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_and_l1_basics() {
        let z = Tensor::<f32>::zeros([1, 3, 4, 4]);
        let o = Tensor::<f32>::full([1, 3, 4, 4], 1.0);
        assert_eq!(mse(&z, &z).unwrap(), 0.0);
        assert_eq!(mse(&z, &o).unwrap(), 1.0);
        assert_eq!(l1_loss(&o, &o).unwrap(), 0.0);
        assert_eq!(l1_loss(&z, &o).unwrap(), 1.0);
        assert!(mse(&z, &Tensor::zeros([1, 3, 4, 5])).is_err());
        let (_, g) = l1_loss_grad(&o, &o).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_images_rejected() {
        let t = Tensor::<f32>::zeros([1, 1, 10, 20]);
        let p = SsimParams::default();
        assert!(matches!(ssim(&t, &t, &p), Err(Error::ImageTooSmall { .. })));
        assert!(matches!(ms_ssim(&t, &t, &p), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn alpha_bounds() {
        assert!(LossConfig::new(1.2).is_err());
        assert!(LossConfig::new(-0.1).is_err());
        assert_eq!(LossConfig::default().alpha, 0.80);
    }

    #[test]
    fn ms_ssim_reports_reduced_pyramid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::<f32>::random_uniform([1, 3, 64, 64], 0.0, 1.0, &mut rng);
        let r = ms_ssim(&a, &a, &SsimParams::default()).unwrap();
        assert_eq!(r.scales, 3);
        assert_eq!(r.weights.len(), 3);
        assert!((r.value - 1.0).abs() < 1e-6);
    }
}
