use super::gemm::{gemm, Strides};
use super::{Element, Shape, Tensor};
use crate::{par, Error, Result};

/// A 2-D convolution (cross-correlation, no kernel flip).
///
/// `weights` has shape `(out_channels, in_channels, kh, kw)`. The same type
/// carries the parameters of the 2x2 transposed convolutions used for
/// upsampling, where `stride` and `padding` are fixed at 2 and 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

/// Gradients of a scalar loss with respect to a convolution's input and parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Element> ConvLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>, stride: usize, padding: usize) -> Result<Self> {
        let layer = ConvLayer {
            weights,
            bias,
            stride,
            padding,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Zero-initialised layer.
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvLayer {
            weights: Tensor::zeros([out_channels, in_channels, kernel, kernel]),
            bias: vec![T::zero(); out_channels],
            stride,
            padding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights.shape();
        if self.bias.len() != w.batch {
            return Err(Error::InvalidLayer(format!(
                "{} biases for {} output channels",
                self.bias.len(),
                w.batch
            )));
        }
        if self.stride == 0 || w.height == 0 || w.width == 0 || w.batch == 0 {
            return Err(Error::InvalidLayer(format!(
                "kernel {w} with stride {}",
                self.stride
            )));
        }
        if !self.weights.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().batch
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().channels
    }

    /// `(kh, kw)`.
    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weights.shape();
        (s.height, s.width)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Output shape of [`conv2d_forward`] for `input`.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.channels != self.in_channels() {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: input,
                right: self.weights.shape(),
            });
        }
        let (kh, kw) = self.kernel();
        let out_dim = |size: usize, k: usize| {
            let padded = size + 2 * self.padding;
            (padded >= k).then(|| (padded - k) / self.stride + 1)
        };
        match (out_dim(input.height, kh), out_dim(input.width, kw)) {
            (Some(h), Some(w)) if h > 0 && w > 0 => {
                Ok(Shape::new(input.batch, self.out_channels(), h, w))
            }
            _ => Err(Error::EmptyOutput {
                op: "conv2d",
                input,
                kernel: kh.max(kw),
                stride: self.stride,
                padding: self.padding,
            }),
        }
    }
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new<T: Element>(layer: &ConvLayer<T>, input: Shape, out: Shape) -> Self {
        let (kh, kw) = layer.kernel();
        Geometry {
            cin: input.channels,
            h: input.height,
            w: input.width,
            kh,
            kw,
            stride: layer.stride,
            pad: layer.padding,
            oh: out.height,
            ow: out.width,
        }
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Source column for output column `ox` at kernel offset `kx`, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, size: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }

    /// Unfolds one image (`cin x h x w`) into a `k x p` column matrix.
    fn im2col<T: Element>(&self, image: &[T], cols: &mut [T]) {
        let p = self.p();
        for ic in 0..self.cin {
            let plane = &image[ic * self.h * self.w..(ic + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ic * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        match self.src(oy, ky, self.h) {
                            None => out_row.fill(T::zero()),
                            Some(iy) => {
                                let src_row = &plane[iy * self.w..(iy + 1) * self.w];
                                for (ox, v) in out_row.iter_mut().enumerate() {
                                    *v = match self.src(ox, kx, self.w) {
                                        Some(ix) => src_row[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds column-matrix rows for input channels `ic0..ic0+n` back
    /// into their `n x h x w` image slice.
    fn col2im<T: Element>(&self, cols: &[T], ic0: usize, planes: &mut [T]) {
        let p = self.p();
        let n = planes.len() / (self.h * self.w);
        for local in 0..n {
            let plane = &mut planes[local * self.h * self.w..(local + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ic0 + local) * self.kh + ky) * self.kw + kx;
                    let src = &cols[(row - ic0 * self.kh * self.kw) * p..][..p];
                    for oy in 0..self.oh {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let dst_row = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let src_row = &src[oy * self.ow..(oy + 1) * self.ow];
                        for (ox, &g) in src_row.iter().enumerate() {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                dst_row[ix] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Rows per block when splitting `rows` output rows across workers.
///
/// Always a divisor of `rows`, so blocks never straddle batch items. The value
/// of every output element is independent of the split.
pub(crate) fn block_rows(rows: usize) -> usize {
    if par::current_num_threads() <= 1 {
        return rows;
    }
    let target = rows.div_ceil(4);
    (target..=rows).find(|d| rows.is_multiple_of(*d)).unwrap_or(rows)
}

fn unfold_all<T: Element>(geo: &Geometry, input: &Tensor<T>) -> Vec<Vec<T>> {
    let item = input.shape().item();
    let kp = geo.k() * geo.p();
    par::map_range(input.shape().batch, |n| {
        let mut cols = vec![T::zero(); kp];
        geo.im2col(&input.data()[n * item..(n + 1) * item], &mut cols);
        cols
    })
}

/// Cross-correlation of `input` with `layer`, plus bias.
pub fn conv2d_forward<T: Element>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    conv2d_forward_blocked(input, layer, None)
}

pub(crate) fn conv2d_forward_blocked<T: Element>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    block: Option<usize>,
) -> Result<Tensor<T>> {
    let out_shape = layer.output_shape(input.shape())?;
    let geo = Geometry::new(layer, input.shape(), out_shape);
    let (k, p, cout) = (geo.k(), geo.p(), out_shape.channels);
    let cols = unfold_all(&geo, input);
    let rows = block.unwrap_or_else(|| block_rows(cout));
    let blocks_per_item = cout / rows;
    let w = layer.weights.data();
    let mut out = Tensor::zeros(out_shape);
    par::for_each_chunk_mut(out.data_mut(), rows * p, |chunk, dst| {
        let n = chunk / blocks_per_item;
        let oc0 = (chunk % blocks_per_item) * rows;
        for (r, row) in dst.chunks_mut(p).enumerate() {
            row.fill(layer.bias[oc0 + r]);
        }
        gemm(
            rows,
            k,
            p,
            &w[oc0 * k..],
            Strides::rows(k),
            &cols[n],
            Strides::rows(p),
            T::one(),
            dst,
            Strides::rows(p),
        );
    });
    Ok(out)
}

/// Gradients of [`conv2d_forward`] given the upstream gradient `grad_out`.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let out_shape = layer.output_shape(input.shape())?;
    grad_out.expect_shape("conv2d_backward", out_shape)?;
    let geo = Geometry::new(layer, input.shape(), out_shape);
    let (k, p, cout, cin) = (geo.k(), geo.p(), out_shape.channels, geo.cin);
    let batch = out_shape.batch;
    let g = grad_out.data();
    let item_out = cout * p;

    let mut bias = vec![T::zero(); cout];
    for n in 0..batch {
        for (oc, b) in bias.iter_mut().enumerate() {
            let start = n * item_out + oc * p;
            *b += g[start..start + p].iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }

    let cols = unfold_all(&geo, input);
    let mut grad_w = Tensor::zeros(layer.weights.shape());
    let rows = block_rows(cout);
    par::for_each_chunk_mut(grad_w.data_mut(), rows * k, |chunk, dst| {
        let oc0 = chunk * rows;
        for (n, cols_n) in cols.iter().enumerate() {
            gemm(
                rows,
                p,
                k,
                &g[n * item_out + oc0 * p..],
                Strides::rows(p),
                cols_n,
                Strides::transposed(p),
                if n == 0 { T::zero() } else { T::one() },
                dst,
                Strides::rows(k),
            );
        }
    });
    drop(cols);

    let kk = geo.kh * geo.kw;
    let hw = geo.h * geo.w;
    let in_rows = block_rows(cin);
    let blocks_per_item = cin / in_rows;
    let w = layer.weights.data();
    let mut grad_in = Tensor::zeros(input.shape());
    par::for_each_chunk_mut(grad_in.data_mut(), in_rows * hw, |chunk, dst| {
        let n = chunk / blocks_per_item;
        let ic0 = (chunk % blocks_per_item) * in_rows;
        let mut gcols = vec![T::zero(); in_rows * kk * p];
        // rows ic0*kk.. of W^T (k x cout, column stride k)
        gemm(
            in_rows * kk,
            cout,
            p,
            &w[ic0 * kk..],
            Strides::transposed(k),
            &g[n * item_out..],
            Strides::rows(p),
            T::zero(),
            &mut gcols,
            Strides::rows(p),
        );
        geo.col2im(&gcols, ic0, dst);
    });

    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias,
    })
}
