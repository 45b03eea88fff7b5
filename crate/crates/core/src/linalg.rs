//! Matrix-free operators consumed by the partial SVD.

use nalgebra::{DMatrix, DMatrixView};

use crate::dense::DenseMatrix;
use crate::sparse::CsrMatrix;

/// Anything that can multiply a block of column vectors from the left, with or
/// without transposition.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `self * x` for an `ncols x b` block.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `self^T * x` for an `nrows x b` block.
    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn all_finite(&self) -> bool;
}

impl DenseMatrix {
    /// The row-major storage read as a column-major matrix, i.e. the transpose,
    /// without copying.
    fn transposed_view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(self.as_slice(), self.cols(), self.rows())
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.cols());
        (x.transpose() * self.transposed_view()).transpose()
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.rows());
        self.transposed_view() * x
    }

    fn all_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl LinearOperator for CsrMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.cols());
        let b = x.ncols();
        // Row-major copies keep the inner loop over the block contiguous.
        let xr = x.transpose();
        let xr = xr.as_slice();
        let mut yr = vec![0.0; self.rows() * b];
        for i in 0..self.rows() {
            let acc = &mut yr[i * b..(i + 1) * b];
            for (j, v) in self.row(i) {
                for (a, xv) in acc.iter_mut().zip(&xr[j * b..(j + 1) * b]) {
                    *a += v * xv;
                }
            }
        }
        DMatrix::from_row_slice(self.rows(), b, &yr)
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.rows());
        let b = x.ncols();
        let xr = x.transpose();
        let xr = xr.as_slice();
        let mut yr = vec![0.0; self.cols() * b];
        for i in 0..self.rows() {
            let xi = &xr[i * b..(i + 1) * b];
            for (j, v) in self.row(i) {
                for (a, xv) in yr[j * b..(j + 1) * b].iter_mut().zip(xi) {
                    *a += v * xv;
                }
            }
        }
        DMatrix::from_row_slice(self.cols(), b, &yr)
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// `factor * inner`, without materializing the scaled matrix.
pub struct Scaled<'a, O: ?Sized> {
    pub inner: &'a O,
    pub factor: f64,
}

impl<O: LinearOperator + ?Sized> LinearOperator for Scaled<'_, O> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply(x) * self.factor
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_transpose(x) * self.factor
    }

    fn all_finite(&self) -> bool {
        self.factor.is_finite() && self.inner.all_finite()
    }
}

/// `inner + shift * I` for a square operator.
pub struct Shifted<'a, O: ?Sized> {
    pub inner: &'a O,
    pub shift: f64,
}

impl<O: LinearOperator + ?Sized> LinearOperator for Shifted<'_, O> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply(x) + x * self.shift
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_transpose(x) + x * self.shift
    }

    fn all_finite(&self) -> bool {
        self.shift.is_finite() && self.inner.all_finite()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis (Householder QR) for the column span of `y`. Always
/// returns `min(rows, cols)` orthonormal columns, even when `y` is rank
/// deficient.
pub(crate) fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]).unwrap()
    }

    #[test]
    fn dense_and_sparse_products_agree_with_nalgebra() {
        let d = sample();
        let s = crate::sparse::CsrMatrix::from_triplets(
            2,
            3,
            vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)],
            crate::sparse::Duplicates::Reject,
        )
        .unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 2.0, 0.5, 3.0, 4.0]);
        let xt = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let reference = d.to_nalgebra();
        assert_eq!(d.apply(&x), &reference * &x);
        assert_eq!(s.apply(&x), &reference * &x);
        assert_eq!(d.apply_transpose(&xt), reference.transpose() * &xt);
        assert_eq!(s.apply_transpose(&xt), reference.transpose() * &xt);
        let scaled = Scaled {
            inner: &d,
            factor: 2.0,
        };
        assert_eq!(scaled.apply(&x), (&reference * &x) * 2.0);
    }

    #[test]
    fn orthonormalize_handles_rank_deficiency() {
        let y = DMatrix::<f64>::zeros(5, 3);
        let q = orthonormalize(y);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
