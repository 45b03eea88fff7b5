//! Neighborhood smoothing estimate of an edge-probability matrix.
//!
//! Node `i'` is a neighbor of `i` when the rows of `W^2 / n` for the two nodes
//! are close in the max norm, ignoring columns `i` and `i'`. Each row of the
//! estimate averages the rows of `W` over a node's neighbors.

use nalgebra::DMatrix;

use crate::dense::DenseMatrix;
use crate::error::{invalid, EcvError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    /// Quantile bandwidth in `(0, 1)`.
    pub h: f64,
    pub symmetrize: bool,
}

impl SmootherConfig {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("bandwidth must be in (0, 1), got {h}")));
        }
        Ok(Self {
            h,
            symmetrize: true,
        })
    }

    /// `h = tau * sqrt(ln n / n)`.
    pub fn from_tau(tau: f64, n: usize) -> Result<Self> {
        Self::new(bandwidth(tau, n))
    }
}

pub fn bandwidth(tau: f64, n: usize) -> f64 {
    let n = n as f64;
    tau * (n.ln() / n).sqrt()
}

/// Pairwise node distances for one input matrix, reusable across bandwidths.
#[derive(Debug, Clone)]
pub struct NeighborhoodDistances {
    n: usize,
    /// Row `i` lists `(distance, i')` for `i' != i`, sorted ascending.
    sorted: Vec<Vec<(f64, usize)>>,
}

impl NeighborhoodDistances {
    pub fn compute(w: &DenseMatrix) -> Result<Self> {
        check_input(w)?;
        let n = w.rows();
        let m = w.to_nalgebra();
        let g: DMatrix<f64> = (&m * &m) / n as f64;
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for ip in i + 1..n {
                let mut worst: f64 = 0.0;
                for k in 0..n {
                    if k != i && k != ip {
                        worst = worst.max((g[(i, k)] - g[(ip, k)]).abs());
                    }
                }
                dist[i * n + ip] = worst;
                dist[ip * n + i] = worst;
            }
        }
        let sorted = (0..n)
            .map(|i| {
                let mut row: Vec<(f64, usize)> = (0..n)
                    .filter(|&ip| ip != i)
                    .map(|ip| (dist[i * n + ip], ip))
                    .collect();
                row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                row
            })
            .collect();
        Ok(Self { n, sorted })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbors of `i` at bandwidth `h`: every `i'` within the nearest-rank
    /// `h`-quantile of `i`'s distances, ties included.
    pub fn neighbors(&self, i: usize, h: f64) -> impl Iterator<Item = usize> + '_ {
        let row = &self.sorted[i];
        let rank = ((h * (self.n - 1) as f64).ceil() as usize).clamp(1, row.len());
        let cutoff = row[rank - 1].0;
        row.iter()
            .take_while(move |(d, _)| *d <= cutoff)
            .map(|&(_, ip)| ip)
    }

    /// Smoothed estimate of `w`, which must be the matrix these distances came
    /// from.
    pub fn smooth(&self, w: &DenseMatrix, cfg: &SmootherConfig) -> Result<DenseMatrix> {
        if w.rows() != self.n || w.cols() != self.n {
            return Err(EcvError::DimensionMismatch(format!(
                "distances for n = {}, matrix is {} x {}",
                self.n,
                w.rows(),
                w.cols()
            )));
        }
        SmootherConfig::new(cfg.h)?;
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            let mut count = 0usize;
            for ip in self.neighbors(i, cfg.h) {
                for (acc, v) in row.iter_mut().zip(w.row(ip)) {
                    *acc += v;
                }
                count += 1;
            }
            let scale = 1.0 / count as f64;
            row.iter_mut().for_each(|v| *v *= scale);
        }
        if cfg.symmetrize {
            for i in 0..n {
                for j in i + 1..n {
                    let avg = 0.5 * (out[i * n + j] + out[j * n + i]);
                    out[i * n + j] = avg;
                    out[j * n + i] = avg;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        DenseMatrix::from_vec(n, n, out)
    }
}

pub fn neighborhood_smoothing(w: &DenseMatrix, cfg: &SmootherConfig) -> Result<DenseMatrix> {
    NeighborhoodDistances::compute(w)?.smooth(w, cfg)
}

fn check_input(w: &DenseMatrix) -> Result<()> {
    if !w.is_square() {
        return Err(EcvError::DimensionMismatch(format!(
            "{} x {} input",
            w.rows(),
            w.cols()
        )));
    }
    if w.rows() < 3 {
        return Err(invalid("neighborhood smoothing needs at least 3 nodes"));
    }
    if !w.is_symmetric(1e-10) {
        return Err(EcvError::NotSymmetric);
    }
    Ok(())
}
