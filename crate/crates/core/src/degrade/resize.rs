use crate::engine::{Element, Tensor};
use crate::{Error, Result};

/// Source taps for each output index along one axis.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    if n_out <= n_in {
        // area: average the covered source interval, partial pixels weighted
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let (start, end) = (o as f64 * scale, (o + 1) as f64 * scale);
                let first = start.floor() as usize;
                let last = (end.ceil() as usize).min(n_in);
                (first..last)
                    .filter_map(|i| {
                        let cover = end.min(i as f64 + 1.0) - start.max(i as f64);
                        (cover > 0.0).then_some((i, cover / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        // bilinear with pixel-centre alignment
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                let f = src - i0 as f64;
                if f == 0.0 || i0 == i1 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - f), (i1, f)]
                }
            })
            .collect()
    }
}

/// Resizes every plane to `out_h x out_w`. Shrinking axes use area
/// averaging; growing axes fall back to bilinear interpolation.
pub fn resize_area<T: Element>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = img.shape();
    if out_h == 0 || out_w == 0 || s.height == 0 || s.width == 0 {
        return Err(Error::Parameter(format!("cannot resize {s} to {out_h}x{out_w}")));
    }
    if (out_h, out_w) == (s.height, s.width) {
        return Ok(img.clone());
    }
    let rows = axis_taps(s.height, out_h);
    let cols = axis_taps(s.width, out_w);
    let out_shape = [s.batch, s.channels, out_h, out_w];
    let mut data = Vec::with_capacity(s.batch * s.channels * out_h * out_w);
    let mut tmp = vec![0.0f64; s.height * out_w];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let plane = img.plane(b, c);
            for y in 0..s.height {
                let src = &plane[y * s.width..(y + 1) * s.width];
                for (x, taps) in cols.iter().enumerate() {
                    tmp[y * out_w + x] = taps.iter().map(|&(i, w)| w * src[i].as_f64()).sum();
                }
            }
            for taps in &rows {
                for x in 0..out_w {
                    let v: f64 = taps.iter().map(|&(i, w)| w * tmp[i * out_w + x]).sum();
                    data.push(T::from_f64_lossy(v));
                }
            }
        }
    }
    Tensor::from_vec(out_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_sum_to_one() {
        for (a, b) in [(10, 3), (7, 7), (5, 9), (64, 17), (3, 64)] {
            for taps in axis_taps(a, b) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12, "{a}->{b}: {s}");
            }
        }
    }
}
