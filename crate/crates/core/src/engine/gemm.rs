use super::Element;

/// Row and column stride of a matrix view, in elements.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    /// Row-major with `cols` columns.
    pub const fn rows(cols: usize) -> Self {
        Strides { row: cols, col: 1 }
    }

    /// The transpose of a row-major matrix with `cols` columns.
    pub const fn transposed(cols: usize) -> Self {
        Strides { row: 1, col: cols }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        (rows - 1) * self.row + (cols - 1) * self.col
    }
}

/// `c = a * b + beta * c` where `a` is `m x k` and `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    sa: Strides,
    b: &[T],
    sb: Strides,
    beta: T,
    c: &mut [T],
    sc: Strides,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(sc.last(m, n) < c.len(), "gemm: output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c[i * sc.row + j * sc.col];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    assert!(sa.last(m, k) < a.len(), "gemm: lhs view out of bounds");
    assert!(sb.last(k, n) < b.len(), "gemm: rhs view out of bounds");
    // SAFETY: the three asserts above bound every index the kernel touches.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            sa.row as isize,
            sa.col as isize,
            b.as_ptr(),
            sb.row as isize,
            sb.col as isize,
            beta,
            c.as_mut_ptr(),
            sc.row as isize,
            sc.col as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product_and_transpose() {
        // [1 2 3; 4 5 6] * [1 0; 0 1; 1 1]
        let a = [1.0f64, 2., 3., 4., 5., 6.];
        let b = [1.0f64, 0., 0., 1., 1., 1.];
        let mut c = [0.0f64; 4];
        gemm(2, 3, 2, &a, Strides::rows(3), &b, Strides::rows(2), 0.0, &mut c, Strides::rows(2));
        assert_eq!(c, [4., 5., 10., 11.]);
        // a^T * a (3x3)
        let mut d = [0.0f64; 9];
        gemm(3, 2, 3, &a, Strides::transposed(3), &a, Strides::rows(3), 0.0, &mut d, Strides::rows(3));
        assert_eq!(d, [17., 22., 27., 22., 29., 36., 27., 36., 45.]);
        // accumulate
        gemm(2, 3, 2, &a, Strides::rows(3), &b, Strides::rows(2), 1.0, &mut c, Strides::rows(2));
        assert_eq!(c, [8., 10., 20., 22.]);
    }
}
