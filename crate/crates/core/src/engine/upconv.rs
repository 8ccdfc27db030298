//! 2x2 transposed convolution with stride 2 (the decoder's up-convolution).
//!
//! `out[n, o, 2i+a, 2j+b] = bias[o] + sum_c in[n, c, i, j] * w[o, c, a, b]`.
//! Computed as one product `Y[(o,a,b), (i,j)] = W'[(o,a,b), c] * X[c, (i,j)]`
//! followed by a pixel scatter.

use super::conv::{block_rows, ConvGrads, ConvLayer};
use super::gemm::{gemm, Strides};
use super::{Element, Shape, Tensor};
use crate::{par, Error, Result};

fn check_layer<T: Element>(layer: &ConvLayer<T>, input: Shape) -> Result<Shape> {
    if layer.kernel() != (2, 2) || layer.stride != 2 || layer.padding != 0 {
        return Err(Error::InvalidLayer(format!(
            "up-convolution needs a 2x2 kernel, stride 2, no padding; got {:?} stride {} padding {}",
            layer.kernel(),
            layer.stride,
            layer.padding
        )));
    }
    if input.channels != layer.in_channels() {
        return Err(Error::ShapeMismatch {
            op: "upconv2x2",
            left: input,
            right: layer.weights.shape(),
        });
    }
    Ok(Shape::new(
        input.batch,
        layer.out_channels(),
        input.height * 2,
        input.width * 2,
    ))
}

/// `(o, c, a, b)` weights rearranged as a `(4*out) x in` matrix.
fn packed_weights<T: Element>(layer: &ConvLayer<T>) -> Vec<T> {
    let (cout, cin) = (layer.out_channels(), layer.in_channels());
    let w = layer.weights.data();
    let mut packed = vec![T::zero(); 4 * cout * cin];
    for o in 0..cout {
        for c in 0..cin {
            for ab in 0..4 {
                packed[(o * 4 + ab) * cin + c] = w[(o * cin + c) * 4 + ab];
            }
        }
    }
    packed
}

pub fn upconv2x2_forward<T: Element>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let out_shape = check_layer(layer, input.shape())?;
    let s = input.shape();
    let (cin, p, w) = (s.channels, s.plane(), s.width);
    let cout = out_shape.channels;
    let packed = packed_weights(layer);
    let rows = block_rows(cout);
    let blocks_per_item = cout / rows;
    let out_plane = out_shape.plane();
    let mut out = Tensor::zeros(out_shape);
    par::for_each_chunk_mut(out.data_mut(), rows * out_plane, |chunk, dst| {
        let n = chunk / blocks_per_item;
        let o0 = (chunk % blocks_per_item) * rows;
        let mut y = vec![T::zero(); rows * 4 * p];
        gemm(
            rows * 4,
            cin,
            p,
            &packed[o0 * 4 * cin..],
            Strides::rows(cin),
            &input.data()[n * cin * p..],
            Strides::rows(p),
            T::zero(),
            &mut y,
            Strides::rows(p),
        );
        for local in 0..rows {
            let bias = layer.bias[o0 + local];
            let plane = &mut dst[local * out_plane..(local + 1) * out_plane];
            for ab in 0..4 {
                let (a, b) = (ab / 2, ab % 2);
                let src = &y[(local * 4 + ab) * p..][..p];
                for (pix, &v) in src.iter().enumerate() {
                    let (i, j) = (pix / w, pix % w);
                    plane[(2 * i + a) * 2 * w + 2 * j + b] = v + bias;
                }
            }
        }
    });
    Ok(out)
}

pub fn upconv2x2_backward<T: Element>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let out_shape = check_layer(layer, input.shape())?;
    grad_out.expect_shape("upconv2x2_backward", out_shape)?;
    let s = input.shape();
    let (batch, cin, p, w) = (s.batch, s.channels, s.plane(), s.width);
    let cout = out_shape.channels;
    let out_plane = out_shape.plane();
    let go = grad_out.data();

    // gather grad_out into (4*cout) x p per batch item
    let gathered: Vec<Vec<T>> = par::map_range(batch, |n| {
        let mut gy = vec![T::zero(); 4 * cout * p];
        for o in 0..cout {
            let plane = &go[(n * cout + o) * out_plane..][..out_plane];
            for ab in 0..4 {
                let (a, b) = (ab / 2, ab % 2);
                let dst = &mut gy[(o * 4 + ab) * p..][..p];
                for (pix, v) in dst.iter_mut().enumerate() {
                    let (i, j) = (pix / w, pix % w);
                    *v = plane[(2 * i + a) * 2 * w + 2 * j + b];
                }
            }
        }
        gy
    });

    let mut bias = vec![T::zero(); cout];
    for n in 0..batch {
        for (o, b) in bias.iter_mut().enumerate() {
            let plane = &go[(n * cout + o) * out_plane..][..out_plane];
            *b += plane.iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }

    let mut packed_grad = vec![T::zero(); 4 * cout * cin];
    let rows = block_rows(4 * cout);
    par::for_each_chunk_mut(&mut packed_grad, rows * cin, |chunk, dst| {
        let r0 = chunk * rows;
        for (n, gy) in gathered.iter().enumerate() {
            gemm(
                rows,
                p,
                cin,
                &gy[r0 * p..],
                Strides::rows(p),
                &input.data()[n * cin * p..],
                Strides::transposed(p),
                if n == 0 { T::zero() } else { T::one() },
                dst,
                Strides::rows(cin),
            );
        }
    });
    let mut grad_w = Tensor::zeros(layer.weights.shape());
    {
        let gw = grad_w.data_mut();
        for o in 0..cout {
            for c in 0..cin {
                for ab in 0..4 {
                    gw[(o * cin + c) * 4 + ab] = packed_grad[(o * 4 + ab) * cin + c];
                }
            }
        }
    }

    let packed = packed_weights(layer);
    let mut grad_in = Tensor::zeros(s);
    par::for_each_chunk_mut(grad_in.data_mut(), cin * p, |n, dst| {
        gemm(
            cin,
            4 * cout,
            p,
            &packed,
            Strides::transposed(cin),
            &gathered[n],
            Strides::rows(p),
            T::zero(),
            dst,
            Strides::rows(p),
        );
    });

    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias,
    })
}
