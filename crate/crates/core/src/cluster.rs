//! K-means and spectral clustering.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{invalid, EcvError, Result};
use crate::linalg::{LinearOperator, Shifted};
use crate::lowrank::{partial_svd, CompletedMatrix, SvdOptions};
use crate::rng;

/// Default number of k-means restarts.
pub const DEFAULT_RESTARTS: usize = 10;
/// Lloyd iterations per restart.
pub const MAX_LLOYD_ITERS: usize = 100;

/// Community label per node, every label `< k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommunityAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl CommunityAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("number of communities must be at least 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max label + 1` as the number of communities.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Same partition with `k` widened (extra classes empty).
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.labels.clone(), k)
    }
}

/// Outcome of the best k-means restart.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: CommunityAssignment,
    pub centroids: DenseMatrix,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    /// Objective after each assignment step of the winning run.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding on the rows of `points`; the best
/// of `restarts` runs by within-cluster sum of squares.
pub fn kmeans<R: Rng + ?Sized>(
    points: &DenseMatrix,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<CommunityAssignment> {
    kmeans_fit(points, k, restarts, rng).map(|fit| fit.assignment)
}

pub fn kmeans_fit<R: Rng + ?Sized>(
    points: &DenseMatrix,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(invalid(format!("cannot form {k} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let base = rng::fork_seed(rng);
    let mut best: Option<KMeansFit> = None;
    for restart in 0..restarts {
        let fit = lloyd(points, k, &mut rng::derive(base, restart as u64));
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng + ?Sized>(points: &DenseMatrix, k: usize, rng: &mut R) -> DenseMatrix {
    let (n, d) = (points.rows(), points.cols());
    let mut centroids = DenseMatrix::zeros(k, d);
    let first = rng.gen_range(0..n);
    centroids_copy_row(&mut centroids, 0, points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids_copy_row(&mut centroids, c, points.row(pick));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn centroids_copy_row(centroids: &mut DenseMatrix, c: usize, row: &[f64]) {
    for (j, &v) in row.iter().enumerate() {
        centroids.set(c, j, v);
    }
}

fn lloyd<R: Rng + ?Sized>(points: &DenseMatrix, k: usize, rng: &mut R) -> KMeansFit {
    let (n, d) = (points.rows(), points.cols());
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut history: Vec<f64> = Vec::new();

    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let row = points.row(i);
            let (mut best_c, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(row, centroids.row(c));
                if dist < best_d {
                    best_c = c;
                    best_d = dist;
                }
            }
            changed |= labels[i] != best_c;
            labels[i] = best_c;
            dists[i] = best_d;
        }
        let objective: f64 = dists.iter().sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                objective <= prev + 1e-9 * prev.max(1.0),
                "k-means objective increased"
            );
        }
        history.push(objective);
        if !changed {
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (acc, v) in sums[l * d..(l + 1) * d].iter_mut().zip(points.row(i)) {
                *acc += v;
            }
        }
        let mut spare = dists.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids.set(c, j, sums[c * d + j] / counts[c] as f64);
                }
            } else {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| spare[a].total_cmp(&spare[b]).then(b.cmp(&a)))
                    .expect("n >= k >= 1");
                spare[far] = -1.0;
                centroids_copy_row(&mut centroids, c, points.row(far));
            }
        }
    }

    let wcss = *history.last().expect("at least one assignment");
    KMeansFit {
        assignment: CommunityAssignment { labels, k },
        centroids,
        wcss,
        history,
    }
}

/// Matrices whose leading singular vectors can drive spectral clustering.
pub trait SpectralInput {
    /// `n x k` leading left singular vectors. Vectors whose singular value is
    /// zero are returned as zero columns.
    fn leading_vectors<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<DMatrix<f64>>;
}

impl SpectralInput for CompletedMatrix {
    fn leading_vectors<R: Rng + ?Sized>(&self, k: usize, _rng: &mut R) -> Result<DMatrix<f64>> {
        if !self.is_symmetric() {
            return Err(EcvError::NotSymmetric);
        }
        if k == 0 || k > self.rank() {
            return Err(invalid(format!(
                "need 1..={} vectors, asked for {k}",
                self.rank()
            )));
        }
        Ok(drop_null_directions(
            self.u().columns(0, k).into_owned(),
            &self.sigma()[..k],
        ))
    }
}

impl SpectralInput for DenseMatrix {
    fn leading_vectors<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        if !self.is_symmetric(1e-8) {
            return Err(EcvError::NotSymmetric);
        }
        operator_leading_vectors(self, k, &SvdOptions::default(), rng)
    }
}

/// Leading left singular vectors of any operator, null directions zeroed.
pub fn operator_leading_vectors<O, R>(
    op: &O,
    k: usize,
    opts: &SvdOptions,
    rng: &mut R,
) -> Result<DMatrix<f64>>
where
    O: LinearOperator + ?Sized,
    R: Rng + ?Sized,
{
    let svd = partial_svd(op, k, opts, rng)?;
    Ok(drop_null_directions(svd.u, &svd.sigma))
}

/// Eigenvectors of the `k` algebraically largest eigenvalues of a normalized
/// Laplacian `D^{-1/2} W D^{-1/2}` with `W >= 0`. Its spectrum lies in
/// `[-1, 1]`, so the top singular vectors of `L + I` are exactly these; the
/// top singular vectors of `L` itself could pick up large negative
/// eigenvalues, which carry no community signal.
pub fn laplacian_leading_vectors<O, R>(
    laplacian: &O,
    k: usize,
    opts: &SvdOptions,
    rng: &mut R,
) -> Result<DMatrix<f64>>
where
    O: LinearOperator + ?Sized,
    R: Rng + ?Sized,
{
    let shifted = Shifted {
        inner: laplacian,
        shift: 1.0,
    };
    let svd = partial_svd(&shifted, k, opts, rng)?;
    Ok(svd.u)
}

fn drop_null_directions(mut u: DMatrix<f64>, sigma: &[f64]) -> DMatrix<f64> {
    let top = sigma.first().copied().unwrap_or(0.0);
    for (c, &s) in sigma.iter().enumerate() {
        if top == 0.0 || s < 1e-12 * top {
            u.column_mut(c).fill(0.0);
        }
    }
    u
}

/// K-means on the rows of a spectral embedding; with `spherical` the rows are
/// first scaled to unit length (rows with norm below 1e-12 stay zero).
pub fn cluster_embedding<R: Rng + ?Sized>(
    vectors: &DMatrix<f64>,
    k: usize,
    spherical: bool,
    restarts: usize,
    rng: &mut R,
) -> Result<CommunityAssignment> {
    let (n, d) = vectors.shape();
    let mut rows = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let row = vectors.row(i);
        let norm = row.norm();
        let scale = match (spherical, norm < 1e-12) {
            (false, _) => 1.0,
            (true, false) => 1.0 / norm,
            (true, true) => 0.0,
        };
        for j in 0..d {
            rows.set(i, j, row[j] * scale);
        }
    }
    kmeans(&rows, k, restarts, rng)
}

/// K-means on the rows of the `k` leading singular vectors.
pub fn spectral_clustering<M, R>(input: &M, k: usize, rng: &mut R) -> Result<CommunityAssignment>
where
    M: SpectralInput + ?Sized,
    R: Rng + ?Sized,
{
    let vectors = input.leading_vectors(k, rng)?;
    cluster_embedding(&vectors, k, false, DEFAULT_RESTARTS, rng)
}

/// Spectral clustering with row-normalized singular vectors.
pub fn spherical_spectral_clustering<M, R>(
    input: &M,
    k: usize,
    rng: &mut R,
) -> Result<CommunityAssignment>
where
    M: SpectralInput + ?Sized,
    R: Rng + ?Sized,
{
    let vectors = input.leading_vectors(k, rng)?;
    cluster_embedding(&vectors, k, true, DEFAULT_RESTARTS, rng)
}
