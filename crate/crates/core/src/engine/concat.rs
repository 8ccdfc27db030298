use super::{Element, Tensor};
use crate::{Error, Result};

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.with_channels(0) != sb.with_channels(0) {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let out_shape = sa.with_channels(sa.channels + sb.channels);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..sa.batch {
        data.extend_from_slice(&a.data()[n * sa.item()..(n + 1) * sa.item()]);
        data.extend_from_slice(&b.data()[n * sb.item()..(n + 1) * sb.item()]);
    }
    Tensor::from_vec(out_shape, data)
}

/// Splits `grad_out` back into the gradients of the two operands.
pub fn concat_channels_backward<T: Element>(
    a_channels: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = grad_out.shape();
    if a_channels > s.channels {
        return Err(Error::Parameter(format!(
            "split at channel {a_channels} of {s}"
        )));
    }
    let (sa, sb) = (s.with_channels(a_channels), s.with_channels(s.channels - a_channels));
    let mut da = Vec::with_capacity(sa.len());
    let mut db = Vec::with_capacity(sb.len());
    for n in 0..s.batch {
        let item = &grad_out.data()[n * s.item()..(n + 1) * s.item()];
        let (left, right) = item.split_at(sa.item());
        da.extend_from_slice(left);
        db.extend_from_slice(right);
    }
    Ok((Tensor::from_vec(sa, da)?, Tensor::from_vec(sb, db)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Shape;

    #[test]
    fn shapes_add_up() {
        let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let b = Tensor::<f32>::full([1, 3, 4, 4], 1.0);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 5, 4, 4));
        assert_eq!(c.plane(0, 1)[0], 0.0);
        assert_eq!(c.plane(0, 2)[0], 1.0);
        assert!(concat_channels(&a, &Tensor::zeros([1, 3, 4, 2])).is_err());
    }

    #[test]
    fn empty_channel_operand_is_identity() {
        let x = Tensor::<f32>::from_fn([2, 3, 2, 2], |b, c, y, x| (b * 100 + c * 10 + y * 2 + x) as f32);
        let empty = Tensor::<f32>::zeros([2, 0, 2, 2]);
        assert_eq!(concat_channels(&x, &empty).unwrap(), x);
        assert_eq!(concat_channels(&empty, &x).unwrap(), x);
    }
}
