//! SBM and DCSBM parameter estimates from the training pairs of a split.
//!
//! Block sums are accumulated over ordered training pairs. For a diagonal
//! block both the edge sum and the pair count double relative to the `i < j`
//! bookkeeping, so the ratio is unchanged.

use crate::cluster::CommunityAssignment;
use crate::dense::DenseMatrix;
use crate::error::{EcvError, Result};
use crate::holdout::HoldoutMask;
use crate::netgraph::AdjacencyMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Sbm,
    Dcsbm,
}

/// A block model fitted on one split.
///
/// For [`ModelKind::Sbm`] `block` holds `B_hat`; for [`ModelKind::Dcsbm`] it
/// holds the block totals `O*` and `theta` the degree parameters.
#[derive(Debug, Clone)]
pub struct FittedBlockModel {
    kind: ModelKind,
    labels: CommunityAssignment,
    block: DenseMatrix,
    theta: Option<Vec<f64>>,
    p: f64,
}

impl FittedBlockModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn labels(&self) -> &CommunityAssignment {
        &self.labels
    }

    /// `B_hat` for an SBM, `O*` for a DCSBM.
    pub fn block_matrix(&self) -> &DenseMatrix {
        &self.block
    }

    pub fn theta(&self) -> Option<&[f64]> {
        self.theta.as_deref()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Estimated edge probability for `i != j`; zero on the diagonal. DCSBM
    /// values may exceed 1.
    #[inline]
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let b = self.block.get(self.labels.label(i), self.labels.label(j));
        match &self.theta {
            None => b,
            Some(theta) => theta[i] * theta[j] * b / self.p,
        }
    }
}

pub fn probability_matrix(model: &FittedBlockModel) -> DenseMatrix {
    let n = model.labels.n();
    DenseMatrix::from_fn(n, n, |i, j| model.probability(i, j))
}

/// Block means of `A` over training pairs; blocks without training pairs get 0.
pub fn estimate_sbm(
    a: &AdjacencyMatrix,
    mask: &HoldoutMask,
    labels: &CommunityAssignment,
) -> Result<FittedBlockModel> {
    let sums = BlockSums::collect(a, mask, labels)?;
    let k = labels.k();
    let sizes = labels.sizes();
    let mut held = vec![0usize; k * k];
    for &(i, j) in mask.held_out() {
        let (ci, cj) = (labels.label(i), labels.label(j));
        held[ci * k + cj] += 1;
        held[cj * k + ci] += 1;
    }
    let block = DenseMatrix::from_fn(k, k, |r, c| {
        let all = sizes[r] * sizes[c] - if r == c { sizes[r] } else { 0 };
        let count = all - held[r * k + c];
        if count == 0 {
            0.0
        } else {
            sums.block[r * k + c] / count as f64
        }
    });
    Ok(FittedBlockModel {
        kind: ModelKind::Sbm,
        labels: labels.clone(),
        block,
        theta: None,
        p: mask.p(),
    })
}

/// Degree-corrected estimate: `O*` block totals and `theta_i` as node `i`'s
/// training degree over its block's total.
pub fn estimate_dcsbm(
    a: &AdjacencyMatrix,
    mask: &HoldoutMask,
    labels: &CommunityAssignment,
) -> Result<FittedBlockModel> {
    let sums = BlockSums::collect(a, mask, labels)?;
    let k = labels.k();
    let block_totals: Vec<f64> = (0..k)
        .map(|r| sums.block[r * k..(r + 1) * k].iter().sum())
        .collect();
    let theta = sums
        .node
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let total = block_totals[labels.label(i)];
            if total == 0.0 {
                0.0
            } else {
                d / total
            }
        })
        .collect();
    Ok(FittedBlockModel {
        kind: ModelKind::Dcsbm,
        labels: labels.clone(),
        block: DenseMatrix::from_vec(k, k, sums.block)?,
        theta: Some(theta),
        p: mask.p(),
    })
}

pub fn estimate(
    kind: ModelKind,
    a: &AdjacencyMatrix,
    mask: &HoldoutMask,
    labels: &CommunityAssignment,
) -> Result<FittedBlockModel> {
    match kind {
        ModelKind::Sbm => estimate_sbm(a, mask, labels),
        ModelKind::Dcsbm => estimate_dcsbm(a, mask, labels),
    }
}

struct BlockSums {
    /// Ordered-pair edge totals, row-major `k x k`.
    block: Vec<f64>,
    /// Per-node training degree.
    node: Vec<f64>,
}

impl BlockSums {
    fn collect(
        a: &AdjacencyMatrix,
        mask: &HoldoutMask,
        labels: &CommunityAssignment,
    ) -> Result<Self> {
        if a.is_directed() {
            return Err(EcvError::Unsupported(
                "block models need an undirected network".into(),
            ));
        }
        mask.check_matches(a)?;
        if labels.n() != a.n() {
            return Err(EcvError::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.n(),
                a.n()
            )));
        }
        let k = labels.k();
        let mut block = vec![0.0; k * k];
        let mut node = vec![0.0; a.n()];
        for (i, j, v) in a.csr().iter() {
            if mask.contains(i, j) {
                block[labels.label(i) * k + labels.label(j)] += v;
                node[i] += v;
            }
        }
        Ok(Self { block, node })
    }
}
