//! Low-rank matrix completion of a partially observed network.
//!
//! The completed matrix is the rank-`K` truncated SVD of the zero-filled
//! training matrix scaled by `1/p`.

mod svd;

pub use svd::{partial_svd, PartialSvd, SvdOptions};

use nalgebra::DMatrix;
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{invalid, EcvError, Result};
use crate::holdout::{training_entries, HoldoutMask};
use crate::linalg::{dot, Scaled};
use crate::netgraph::AdjacencyMatrix;
use crate::sparse::CsrMatrix;

/// Rank-`K` reconstruction `U diag(sigma) V^T` kept in factored form.
#[derive(Debug, Clone)]
pub struct CompletedMatrix {
    /// Rows of `U diag(sigma)`, row-major `n x rank`.
    scaled_u: Vec<f64>,
    /// Rows of `V`, row-major `n x rank`.
    v_rows: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
    p: f64,
    symmetric: bool,
}

impl CompletedMatrix {
    fn new(u: DMatrix<f64>, sigma: Vec<f64>, v: DMatrix<f64>, p: f64, symmetric: bool) -> Self {
        let (n, rank) = u.shape();
        let mut scaled_u = Vec::with_capacity(n * rank);
        let mut v_rows = Vec::with_capacity(v.nrows() * rank);
        for i in 0..n {
            scaled_u.extend((0..rank).map(|c| u[(i, c)] * sigma[c]));
        }
        for i in 0..v.nrows() {
            v_rows.extend((0..rank).map(|c| v[(i, c)]));
        }
        Self {
            scaled_u,
            v_rows,
            u,
            v,
            sigma,
            p,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Whether the input to the completion was symmetric (undirected).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Entry `(i, j)` of `U diag(sigma) V^T`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let r = self.rank();
        dot(
            &self.scaled_u[i * r..(i + 1) * r],
            &self.v_rows[j * r..(j + 1) * r],
        )
    }

    /// The leading `k` triplets; identical to completing at rank `k` directly.
    pub fn truncated(&self, k: usize) -> Result<CompletedMatrix> {
        if k == 0 || k > self.rank() {
            return Err(invalid(format!(
                "cannot truncate rank {} to {k}",
                self.rank()
            )));
        }
        Ok(Self::new(
            self.u.columns(0, k).into_owned(),
            self.sigma[..k].to_vec(),
            self.v.columns(0, k).into_owned(),
            self.p,
            self.symmetric,
        ))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n();
        DenseMatrix::from_fn(n, self.v.nrows(), |i, j| self.entry(i, j))
    }
}

/// Completes `A` from the training pairs of `mask` at rank `k`.
pub fn complete<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    mask: &HoldoutMask,
    k: usize,
    rng: &mut R,
) -> Result<CompletedMatrix> {
    complete_with(a, mask, k, &SvdOptions::default(), rng)
}

pub fn complete_with<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    mask: &HoldoutMask,
    k: usize,
    opts: &SvdOptions,
    rng: &mut R,
) -> Result<CompletedMatrix> {
    let train = training_entries(a, mask)?;
    let op = Scaled {
        inner: &train,
        factor: 1.0 / mask.p(),
    };
    let svd = partial_svd(&op, k, opts, rng)?;
    Ok(CompletedMatrix::new(
        svd.u,
        svd.sigma,
        svd.v,
        mask.p(),
        !a.is_directed(),
    ))
}

/// Dense copy of the completed matrix with entries clamped to `[lo, hi]`.
pub fn truncate_entries(completed: &CompletedMatrix, lo: f64, hi: f64) -> Result<DenseMatrix> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(invalid(format!("empty clamp interval [{lo}, {hi}]")));
    }
    Ok(completed.to_dense().map(|v| v.clamp(lo, hi)))
}

/// `P_Omega A / p`: the zero-fill alternative to completion. Only meaningful
/// for binary networks.
pub fn zero_fill_rescale(a: &AdjacencyMatrix, mask: &HoldoutMask) -> Result<CsrMatrix> {
    if a.is_weighted() {
        return Err(EcvError::Unsupported(
            "zero-fill rescaling does not apply to weighted networks".into(),
        ));
    }
    Ok(training_entries(a, mask)?.scaled(1.0 / mask.p()))
}
