//! Random node-pair splits: the training set and its held-out complement.

use bitvec::vec::BitVec;
use rand::Rng;

use crate::error::{invalid, EcvError, Result};
use crate::netgraph::AdjacencyMatrix;
use crate::sparse::CsrMatrix;

/// Training node pairs of one split.
///
/// Membership is a bitset over ordered pairs `i * n + j`; the diagonal is never
/// part of either the training or the held-out set. Undirected masks are
/// symmetric, and list each held-out pair once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutMask {
    n: usize,
    directed: bool,
    p: f64,
    train: BitVec,
    held_out: Vec<(usize, usize)>,
}

impl HoldoutMask {
    /// Puts each pair (unordered if undirected) into the training set
    /// independently with probability `p`.
    pub fn sample<R: Rng + ?Sized>(n: usize, p: f64, directed: bool, rng: &mut R) -> Result<Self> {
        check_p(p)?;
        if n < 2 {
            return Err(invalid(format!("need at least 2 nodes, got {n}")));
        }
        loop {
            let mut train = BitVec::repeat(false, n * n);
            let mut held_out = Vec::new();
            for i in 0..n {
                let start = if directed { 0 } else { i + 1 };
                for j in start..n {
                    if i == j {
                        continue;
                    }
                    if rng.gen::<f64>() < p {
                        train.set(i * n + j, true);
                        if !directed {
                            train.set(j * n + i, true);
                        }
                    } else {
                        held_out.push((i, j));
                    }
                }
            }
            if train.any() {
                return Ok(Self {
                    n,
                    directed,
                    p,
                    train,
                    held_out,
                });
            }
        }
    }

    /// Every off-diagonal pair in training, `p = 1`.
    pub fn full(n: usize, directed: bool) -> Self {
        let mut train = BitVec::repeat(true, n * n);
        for i in 0..n {
            train.set(i * n + i, false);
        }
        Self {
            n,
            directed,
            p: 1.0,
            train,
            held_out: Vec::new(),
        }
    }

    /// An explicit training set with a declared sampling probability. For
    /// undirected masks each listed pair also adds its mirror.
    pub fn from_pairs(
        n: usize,
        directed: bool,
        p: f64,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        check_p(p)?;
        let mut train = BitVec::repeat(false, n * n);
        for (i, j) in pairs {
            if i >= n || j >= n || i == j {
                return Err(invalid(format!(
                    "pair ({i}, {j}) is not an off-diagonal pair for n = {n}"
                )));
            }
            train.set(i * n + j, true);
            if !directed {
                train.set(j * n + i, true);
            }
        }
        let mut held_out = Vec::new();
        for i in 0..n {
            let start = if directed { 0 } else { i + 1 };
            for j in start..n {
                if i != j && !train[i * n + j] {
                    held_out.push((i, j));
                }
            }
        }
        Ok(Self {
            n,
            directed,
            p,
            train,
            held_out,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Whether `(i, j)` is a training pair.
    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.train[i * self.n + j]
    }

    /// Held-out pairs (`i < j` when undirected), in row-major order.
    pub fn held_out(&self) -> &[(usize, usize)] {
        &self.held_out
    }

    /// Number of ordered training pairs.
    pub fn train_count(&self) -> usize {
        self.train.count_ones()
    }

    /// Fraction of ordered off-diagonal pairs in the training set.
    pub fn train_fraction(&self) -> f64 {
        self.train_count() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub(crate) fn check_matches(&self, a: &AdjacencyMatrix) -> Result<()> {
        if self.n != a.n() || self.directed != a.is_directed() {
            return Err(EcvError::DimensionMismatch(format!(
                "mask (n = {}, directed = {}) vs network (n = {}, directed = {})",
                self.n,
                self.directed,
                a.n(),
                a.is_directed()
            )));
        }
        Ok(())
    }
}

/// `P_Omega A`: the network with held-out entries removed.
pub fn zero_fill(a: &AdjacencyMatrix, mask: &HoldoutMask) -> Result<AdjacencyMatrix> {
    Ok(AdjacencyMatrix::from_csr_unchecked(
        training_entries(a, mask)?,
        a.is_directed(),
        a.is_weighted(),
    ))
}

pub(crate) fn training_entries(a: &AdjacencyMatrix, mask: &HoldoutMask) -> Result<CsrMatrix> {
    mask.check_matches(a)?;
    Ok(a.csr().filter(|i, j, _| mask.contains(i, j)))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!(
            "training probability must be in (0, 1], got {p}"
        )));
    }
    Ok(())
}
