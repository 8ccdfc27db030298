use super::{Element, Shape, Tensor};
use crate::{par, Error, Result};

/// Flat input index of the maximum of every 2x2 window, saved for backward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub indices: Vec<u32>,
}

/// 2x2 max-pooling with stride 2. Ties go to the first element in row-major order.
pub fn maxpool2x2_forward<T: Element>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = input.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(Error::OddSpatial {
            op: "maxpool2x2",
            shape: s,
        });
    }
    if s.len() > u32::MAX as usize {
        return Err(Error::Parameter(format!("tensor {s} too large for pooling indices")));
    }
    let out_shape = Shape::new(s.batch, s.channels, s.height / 2, s.width / 2);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let opl = oh * ow;
    let data = input.data();
    let planes = par::map_range(s.batch * s.channels, |pl| {
        let base = pl * s.plane();
        let mut vals = Vec::with_capacity(opl);
        let mut idx = Vec::with_capacity(opl);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * s.width + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * s.width + 2 * ox + dx;
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                vals.push(data[best]);
                idx.push(best as u32);
            }
        }
        (vals, idx)
    });
    let mut out = Vec::with_capacity(out_shape.len());
    let mut indices = Vec::with_capacity(out_shape.len());
    for (v, i) in planes {
        out.extend(v);
        indices.extend(i);
    }
    Ok((
        Tensor::from_vec(out_shape, out)?,
        PoolIndices {
            input_shape: s,
            indices,
        },
    ))
}

/// Routes each upstream gradient to the recorded argmax location.
pub fn maxpool2x2_backward<T: Element>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != indices.indices.len() {
        return Err(Error::DataLength {
            len: grad_out.len(),
            shape: indices.input_shape,
        });
    }
    let mut grad = Tensor::zeros(indices.input_shape);
    let len = grad.len();
    let g = grad.data_mut();
    for (&i, &v) in indices.indices.iter().zip(grad_out.data()) {
        let i = i as usize;
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        g[i] += v;
    }
    Ok(grad)
}
