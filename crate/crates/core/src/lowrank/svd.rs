use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EcvError, Result};
use crate::linalg::{orthonormalize, LinearOperator};

/// Settings for [`partial_svd`].
///
/// The solver draws a Gaussian test block of `k + oversample` columns, runs
/// `power_iters` subspace iterations, and then keeps iterating until every one
/// of the top `k` Ritz triplets has residual `||A v - sigma u|| <= tol * sigma_1`
/// or `max_iters` extra iterations have been spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl SvdOptions {
    const DEFAULT: Self = Self {
        oversample: 10,
        power_iters: 2,
        tol: 1e-12,
        max_iters: 1000,
    };

    /// Exactly `power_iters` iterations, no residual refinement.
    pub const fn fixed(power_iters: usize) -> Self {
        Self {
            power_iters,
            max_iters: 0,
            ..Self::DEFAULT
        }
    }

    pub const fn with_tolerance(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            ..Self::DEFAULT
        }
    }
}

/// Leading singular triplets, `sigma` non-increasing.
#[derive(Debug, Clone)]
pub struct PartialSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
    /// Refinement iterations spent after the initial power iterations.
    pub iterations: usize,
    pub converged: bool,
}

/// Top-`k` singular triplets of `op`.
pub fn partial_svd<O, R>(op: &O, k: usize, opts: &SvdOptions, rng: &mut R) -> Result<PartialSvd>
where
    O: LinearOperator + ?Sized,
    R: Rng + ?Sized,
{
    let (m, n) = (op.nrows(), op.ncols());
    let min_dim = m.min(n);
    if k == 0 || k > min_dim {
        return Err(invalid(format!("rank {k} outside 1..={min_dim}")));
    }
    if !op.all_finite() {
        return Err(EcvError::NonFinite);
    }
    let width = (k + opts.oversample).min(min_dim);

    let omega = DMatrix::from_fn(n, width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut basis = orthonormalize(op.apply(&omega));
    for _ in 0..opts.power_iters {
        let z = orthonormalize(op.apply_transpose(&basis));
        basis = orthonormalize(op.apply(&z));
    }

    let mut iterations = 0;
    loop {
        // basis^T A, stored transposed (n x width).
        let projected = op.apply_transpose(&basis);
        let (u, sigma, v) = small_svd(&basis, &projected, k);

        let av = op.apply(&v);
        let scale = sigma[0];
        let worst = (0..k)
            .map(|c| (av.column(c) - u.column(c) * sigma[c]).norm())
            .fold(0.0, f64::max);
        let converged = scale == 0.0 || worst <= opts.tol * scale;
        if converged || iterations >= opts.max_iters {
            return Ok(PartialSvd {
                u,
                sigma,
                v,
                iterations,
                converged,
            });
        }
        basis = orthonormalize(op.apply(&orthonormalize(projected)));
        iterations += 1;
    }
}

/// Rayleigh-Ritz step: with `projected = A^T Q`, returns the top `k` triplets
/// of `Q Q^T A`.
fn small_svd(
    basis: &DMatrix<f64>,
    projected: &DMatrix<f64>,
    k: usize,
) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    // projected = Q2 R and R = W S X^T, so projected = (Q2 W) S X^T.
    let qr = projected.clone().qr();
    let (q2, r) = (qr.q(), qr.r());
    let svd = r.svd(true, true);
    let w = q2 * svd.u.expect("left vectors requested");
    let x = svd.v_t.expect("right vectors requested").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(k);

    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].max(0.0))
        .collect();
    let x_top = DMatrix::from_fn(x.nrows(), k, |r, c| x[(r, order[c])]);
    let v = DMatrix::from_fn(w.nrows(), k, |r, c| w[(r, order[c])]);
    let u = basis * x_top;
    (u, sigma, v)
}
