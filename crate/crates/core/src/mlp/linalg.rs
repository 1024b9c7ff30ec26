//! Safe wrappers over the `matrixmultiply` kernels for row-major buffers.

/// Row-major matrix view description: `rows × cols` with the given strides.
#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl Layout {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn transposed(self) -> Self {
        Self { rows: self.cols, cols: self.rows, row_stride: self.col_stride, col_stride: self.row_stride }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride + 1
        }
    }
}

/// `c ← alpha · a · b + beta · c`, with `c` row-major.
pub(crate) fn gemm(alpha: f64, a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64]) {
    assert_eq!(la.cols, lb.rows, "inner dimensions differ");
    assert!(a.len() >= la.span() && b.len() >= lb.span(), "operand buffer too small");
    assert!(c.len() >= la.rows * lb.cols, "output buffer too small");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            la.rows,
            la.cols,
            lb.cols,
            alpha,
            a.as_ptr(),
            la.row_stride as isize,
            la.col_stride as isize,
            b.as_ptr(),
            lb.row_stride as isize,
            lb.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            lb.cols as isize,
            1,
        );
    }
}
