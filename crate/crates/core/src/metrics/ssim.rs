//! Windowed SSIM on single planes, with gradients.
//!
//! Local statistics come from a separable Gaussian filter over valid window
//! positions only. The gradient pulls per-position partial derivatives back
//! through the adjoint of that filter:
//!
//! `dS/dx = G^T(dS/dmu_x) + 2x * G^T(dS/dE[x^2]) + y * G^T(dS/dE[xy])`.

use super::SsimParams;
use crate::engine::Element;

/// Normalised 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub data: Vec<f64>,
    pub h: usize,
    pub w: usize,
}

impl Plane {
    pub fn from_slice<T: Element>(s: &[T], h: usize, w: usize) -> Self {
        Plane {
            data: s.iter().map(|v| v.as_f64()).collect(),
            h,
            w,
        }
    }

    fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            h: self.h,
            w: self.w,
        }
    }

    /// 2x2 mean pooling; a trailing odd row/column is dropped.
    fn downsample(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                data.push(0.25 * (self.data[i] + self.data[i + 1] + self.data[i + self.w] + self.data[i + self.w + 1]));
            }
        }
        Plane { data, h, w }
    }

    /// Adjoint of [`downsample`] onto a `h x w` plane.
    fn upsample_adjoint(&self, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..self.h {
            for x in 0..self.w {
                let g = 0.25 * self.data[y * self.w + x];
                let i = 2 * y * w + 2 * x;
                out[i] += g;
                out[i + 1] += g;
                out[i + w] += g;
                out[i + w + 1] += g;
            }
        }
        out
    }
}

pub(crate) struct SsimWindow {
    taps: Vec<f64>,
    c1: f64,
    c2: f64,
}

pub(crate) struct PlaneStats {
    pub ssim: f64,
    pub cs: f64,
    pub grad_ssim: Option<Vec<f64>>,
    pub grad_cs: Option<Vec<f64>>,
}

impl SsimWindow {
    pub fn new(params: &SsimParams) -> Self {
        SsimWindow {
            taps: gaussian_window(params.window_size, params.sigma),
            c1: params.c1(),
            c2: params.c2(),
        }
    }

    /// Valid-mode separable filtering.
    fn filter(&self, p: &Plane) -> Plane {
        let k = self.taps.len();
        let (oh, ow) = (p.h + 1 - k, p.w + 1 - k);
        let mut rows = vec![0.0; p.h * ow];
        for y in 0..p.h {
            let src = &p.data[y * p.w..(y + 1) * p.w];
            for x in 0..ow {
                rows[y * ow + x] = self.taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
            }
        }
        let mut data = vec![0.0; oh * ow];
        for y in 0..oh {
            for (t, tap) in self.taps.iter().enumerate() {
                let src = &rows[(y + t) * ow..(y + t + 1) * ow];
                for (d, s) in data[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *d += tap * s;
                }
            }
        }
        Plane { data, h: oh, w: ow }
    }

    /// Adjoint of [`filter`]: scatters a valid-size map back to `h x w`.
    fn filter_adjoint(&self, m: &[f64], h: usize, w: usize) -> Vec<f64> {
        let k = self.taps.len();
        let (oh, ow) = (h + 1 - k, w + 1 - k);
        let mut rows = vec![0.0; h * ow];
        for y in 0..oh {
            for (t, tap) in self.taps.iter().enumerate() {
                let dst = &mut rows[(y + t) * ow..(y + t + 1) * ow];
                for (d, s) in dst.iter_mut().zip(&m[y * ow..(y + 1) * ow]) {
                    *d += tap * s;
                }
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..ow {
                let g = rows[y * ow + x];
                for (d, t) in dst[x..x + k].iter_mut().zip(&self.taps) {
                    *d += t * g;
                }
            }
        }
        out
    }

    pub fn stats(&self, x: &Plane, y: &Plane, grad: bool) -> PlaneStats {
        let mx = self.filter(x);
        let my = self.filter(y);
        let exx = self.filter(&x.map2(x, |a, _| a * a));
        let eyy = self.filter(&y.map2(y, |a, _| a * a));
        let exy = self.filter(&x.map2(y, |a, b| a * b));
        let n = mx.data.len();
        let inv_n = 1.0 / n as f64;
        let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
        let mut d = grad.then(|| [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]]);
        for i in 0..n {
            let (ux, uy) = (mx.data[i], my.data[i]);
            let uxy = ux * uy;
            let sxx = exx.data[i] - ux * ux;
            let syy = eyy.data[i] - uy * uy;
            let sxy = exy.data[i] - uxy;
            let b1 = ux * ux + uy * uy + self.c1;
            let b2 = sxx + syy + self.c2;
            let l = (2.0 * uxy + self.c1) / b1;
            let cs = (2.0 * sxy + self.c2) / b2;
            ssim_sum += l * cs;
            cs_sum += cs;
            if let Some([sm, sxx_d, sxy_d, cm, cxx_d, cxy_d]) = d.as_mut() {
                let dl_dmx = (2.0 * uy - 2.0 * ux * l) / b1;
                let dcs_dsxy = 2.0 / b2;
                let dcs_dsxx = -cs / b2;
                let dcs_dmx = -uy * dcs_dsxy - 2.0 * ux * dcs_dsxx;
                sm[i] = (cs * dl_dmx + l * dcs_dmx) * inv_n;
                sxx_d[i] = l * dcs_dsxx * inv_n;
                sxy_d[i] = l * dcs_dsxy * inv_n;
                cm[i] = dcs_dmx * inv_n;
                cxx_d[i] = dcs_dsxx * inv_n;
                cxy_d[i] = dcs_dsxy * inv_n;
            }
        }
        let (grad_ssim, grad_cs) = match d {
            None => (None, None),
            Some([sm, sxx_d, sxy_d, cm, cxx_d, cxy_d]) => (
                Some(self.pull_back(x, y, &sm, &sxx_d, &sxy_d)),
                Some(self.pull_back(x, y, &cm, &cxx_d, &cxy_d)),
            ),
        };
        PlaneStats {
            ssim: ssim_sum * inv_n,
            cs: cs_sum * inv_n,
            grad_ssim,
            grad_cs,
        }
    }

    fn pull_back(&self, x: &Plane, y: &Plane, dm: &[f64], dxx: &[f64], dxy: &[f64]) -> Vec<f64> {
        let gm = self.filter_adjoint(dm, x.h, x.w);
        let gxx = self.filter_adjoint(dxx, x.h, x.w);
        let gxy = self.filter_adjoint(dxy, x.h, x.w);
        (0..x.data.len())
            .map(|p| gm[p] + 2.0 * x.data[p] * gxx[p] + y.data[p] * gxy[p])
            .collect()
    }

    /// MS-SSIM of one plane: `prod_j cs_j^w_j` over the finer scales times
    /// `ssim^w` at the coarsest, each term clamped at zero.
    pub fn ms_ssim(&self, x: &Plane, y: &Plane, weights: &[f64], grad: bool) -> (f64, Option<Vec<f64>>) {
        let m = weights.len();
        let mut xs = vec![x.clone()];
        let mut ys = vec![y.clone()];
        for _ in 1..m {
            let (nx, ny) = (xs.last().unwrap().downsample(), ys.last().unwrap().downsample());
            xs.push(nx);
            ys.push(ny);
        }
        let stats: Vec<PlaneStats> = (0..m).map(|j| self.stats(&xs[j], &ys[j], grad)).collect();
        let terms: Vec<f64> = stats
            .iter()
            .enumerate()
            .map(|(j, s)| if j + 1 == m { s.ssim } else { s.cs }.max(0.0))
            .collect();
        let value: f64 = terms.iter().zip(weights).map(|(t, w)| t.powf(*w)).product();
        if !grad {
            return (value, None);
        }
        let mut g: Option<Vec<f64>> = None;
        for j in (0..m).rev() {
            let plane = &xs[j];
            let mut acc = match g.take() {
                Some(coarse) => Plane {
                    data: coarse,
                    h: xs[j + 1].h,
                    w: xs[j + 1].w,
                }
                .upsample_adjoint(plane.h, plane.w),
                None => vec![0.0; plane.data.len()],
            };
            if terms[j] > 0.0 && value > 0.0 {
                let coef = weights[j] * value / terms[j];
                let local = if j + 1 == m {
                    stats[j].grad_ssim.as_ref()
                } else {
                    stats[j].grad_cs.as_ref()
                }
                .expect("requested");
                acc.iter_mut().zip(local).for_each(|(a, l)| *a += coef * l);
            }
            g = Some(acc);
        }
        (value, g)
    }
}
