use std::sync::Mutex;

use rand::Rng;
use serde::Serialize;

use super::{ecv_splits, Candidate, EcvConfig, SelectionResult, SplitContext};
use crate::cluster::{cluster_embedding, laplacian_leading_vectors, CommunityAssignment};
use crate::dense::DenseMatrix;
use crate::error::{invalid, EcvError, Result};
use crate::graphon::{NeighborhoodDistances, SmootherConfig};
use crate::lowrank::{CompletedMatrix, SvdOptions};
use crate::metrics::{ccd, sse_loss};
use crate::netgraph::{normalized_laplacian_dense, regularize_dense, AdjacencyMatrix};
use crate::rng::{derive, fork_seed};

#[derive(Debug, Clone, Serialize)]
pub struct RegularizationTuning {
    pub selection: SelectionResult,
    /// Regularized spectral clustering of the full network, one per candidate
    /// in `selection.candidates`.
    pub full_labels: Vec<CommunityAssignment>,
}

impl RegularizationTuning {
    /// Full-network clustering at the chosen `tau`.
    pub fn chosen_labels(&self) -> &CommunityAssignment {
        let q = self
            .selection
            .candidates
            .iter()
            .position(|c| *c == self.selection.chosen)
            .expect("chosen candidate is on the menu");
        &self.full_labels[q]
    }
}

/// Solver settings for clustering the full network. Its sparse Laplacian has
/// a noise bulk close to the community eigenvalues, so the loose split
/// settings would stop far from convergence; each product is cheap.
pub const FULL_NETWORK_SVD: SvdOptions = SvdOptions::with_tolerance(1e-6, 300);

/// Regularized spectral clustering of `A` with `k` clusters at one `tau`,
/// using the `k` algebraically largest eigenvectors of its Laplacian.
pub fn regularized_spectral_clustering<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    tau: f64,
    k: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<CommunityAssignment> {
    let op = a.regularized_laplacian(tau)?;
    let vectors = laplacian_leading_vectors(&op, k, &FULL_NETWORK_SVD, rng)?;
    cluster_embedding(&vectors, k, false, restarts, rng)
}

/// Picks the regularization `tau` whose split clusterings agree best, on the
/// held-out pairs, with the full-network clustering at the same `tau`.
///
/// On each split the completed matrix is clipped at zero, its diagonal
/// cleared, and then regularized with its own mean degree before clustering.
/// The loss is the co-clustering difference over the held-out pairs.
pub fn tune_regularization<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    taus: &[f64],
    k: usize,
    cfg: &EcvConfig,
    rng: &mut R,
) -> Result<RegularizationTuning> {
    if a.is_directed() || a.is_weighted() {
        return Err(EcvError::Unsupported(
            "regularization tuning needs an undirected binary network".into(),
        ));
    }
    if k == 0 || k > a.n() {
        return Err(invalid(format!("K must be in 1..={}, got {k}", a.n())));
    }
    let candidates = tau_menu(taus, Candidate::TauReg)?;
    cfg.validate()?;

    let full_seed = fork_seed(rng);
    let full_labels = candidates
        .iter()
        .enumerate()
        .map(|(q, c)| {
            regularized_spectral_clustering(
                a,
                c.value(),
                k,
                cfg.restarts,
                &mut derive(full_seed, q as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let selection = ecv_splits(a, &candidates, Some(k), cfg, rng, |ctx| {
        let w = clipped_completion(ctx.completed()?, 0.0, f64::INFINITY);
        Ok(ctx
            .candidates
            .iter()
            .enumerate()
            .map(|(q, c)| {
                let labels = split_clustering(&w, c.value(), k, ctx, q).ok()?;
                let pos = full_labels
                    .iter()
                    .zip(&candidates)
                    .find(|(_, full_c)| *full_c == c)
                    .map(|(l, _)| l)?;
                ccd(&labels, pos, ctx.mask.held_out()).ok()
            })
            .collect())
    })?;
    let full_labels = selection
        .candidates
        .iter()
        .map(|c| {
            let q = candidates.iter().position(|x| x == c).expect("same menu");
            full_labels[q].clone()
        })
        .collect();
    Ok(RegularizationTuning {
        selection,
        full_labels,
    })
}

fn split_clustering(
    w: &DenseMatrix,
    tau: f64,
    k: usize,
    ctx: &SplitContext<'_>,
    q: usize,
) -> Result<CommunityAssignment> {
    let laplacian = normalized_laplacian_dense(&regularize_dense(w, tau)?)?;
    let mut r = ctx.candidate_rng(q);
    let vectors = laplacian_leading_vectors(&laplacian, k, &ctx.config.svd, &mut r)?;
    cluster_embedding(&vectors, k, false, ctx.config.restarts, &mut r)
}

/// Symmetric part of a completion, clamped to `[lo, hi]`, with a zero
/// diagonal. The solver's left and right vectors agree only up to its
/// tolerance, so the two triangles are averaged.
fn clipped_completion(completed: &CompletedMatrix, lo: f64, hi: f64) -> DenseMatrix {
    let n = completed.n();
    DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (0.5 * (completed.entry(i, j) + completed.entry(j, i))).clamp(lo, hi)
        }
    })
}

fn tau_menu(taus: &[f64], make: fn(f64) -> Candidate) -> Result<Vec<Candidate>> {
    if taus.is_empty() {
        return Err(invalid("tau grid is empty"));
    }
    let mut out: Vec<Candidate> = Vec::new();
    for &t in taus {
        let c = make(t);
        c.validate()?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphonTuning {
    pub selection: SelectionResult,
    /// Completion rank picked on each split, `None` if the split failed.
    pub completion_ranks: Vec<Option<usize>>,
}

/// Picks the neighborhood-smoothing constant `tau`, with bandwidth
/// `h = tau * sqrt(ln n / n)`.
///
/// Each split completes the network at every rank up to `kmax_completion`,
/// keeps the rank with the smallest held-out squared error, clips that
/// completion to `[0, 1]` with a zero diagonal, and smooths it at every
/// `tau`. The loss is the squared error of the smoothed matrix on the
/// held-out pairs. A `tau` whose bandwidth falls outside `(0, 1)` is missing.
pub fn tune_graphon<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    taus: &[f64],
    kmax_completion: usize,
    cfg: &EcvConfig,
    rng: &mut R,
) -> Result<GraphonTuning> {
    if a.is_directed() || a.is_weighted() {
        return Err(EcvError::Unsupported(
            "graphon tuning needs an undirected binary network".into(),
        ));
    }
    if kmax_completion == 0 || kmax_completion > a.n() {
        return Err(invalid(format!(
            "completion rank must be in 1..={}, got {kmax_completion}",
            a.n()
        )));
    }
    let candidates = tau_menu(taus, Candidate::TauGraphon)?;
    let ranks = Mutex::new(vec![None; cfg.n_splits]);
    let selection = ecv_splits(a, &candidates, Some(kmax_completion), cfg, rng, |ctx| {
        let completed = ctx.completed()?;
        let mut best: Option<(f64, usize)> = None;
        for k in 1..=kmax_completion {
            let c = completed.truncated(k)?;
            let loss = sse_loss(&ctx.score_fn(|i, j| c.entry(i, j)))?;
            if best.is_none_or(|(b, _)| loss < b) {
                best = Some((loss, k));
            }
        }
        let k_star = best.expect("at least one rank").1;
        ranks.lock().expect("rank log")[ctx.index] = Some(k_star);

        let w = clipped_completion(&completed.truncated(k_star)?, 0.0, 1.0);
        let distances = NeighborhoodDistances::compute(&w)?;
        let n = a.n();
        Ok(ctx
            .candidates
            .iter()
            .map(|c| {
                let smoother = SmootherConfig::from_tau(c.value(), n).ok()?;
                let p = distances.smooth(&w, &smoother).ok()?;
                sse_loss(&ctx.score_fn(|i, j| p.get(i, j))).ok()
            })
            .collect())
    })?;
    Ok(GraphonTuning {
        selection,
        completion_ranks: ranks.into_inner().expect("rank log"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::clustering_accuracy;
    use crate::simgen::{gen_block_model, gen_graphon, BlockDesign, GraphonKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sparse_dcsbm(seed: u64) -> crate::simgen::PlantedInstance {
        let d = BlockDesign {
            n: 300,
            k: 3,
            lambda: 8.0,
            t: 0.0,
            beta: 0.2,
            degree_corrected: true,
        };
        gen_block_model(&d, &mut rng(seed)).unwrap()
    }

    #[test]
    fn single_tau_and_duplicates() {
        let inst = sparse_dcsbm(1);
        let cfg = EcvConfig::default();
        let res = tune_regularization(&inst.adjacency, &[0.5], 3, &cfg, &mut rng(2)).unwrap();
        assert_eq!(res.selection.chosen, Candidate::TauReg(0.5));
        let res =
            tune_regularization(&inst.adjacency, &[0.5, 0.5, 1.0], 3, &cfg, &mut rng(2)).unwrap();
        assert_eq!(res.selection.candidates.len(), 2);
        assert_eq!(res.full_labels.len(), 2);
    }

    #[test]
    fn chosen_tau_clusters_well() {
        let inst = sparse_dcsbm(3);
        let taus: Vec<f64> = (1..=10).map(|i| i as f64 * 0.2).collect();
        let res = tune_regularization(
            &inst.adjacency,
            &taus,
            3,
            &EcvConfig::default(),
            &mut rng(4),
        )
        .unwrap();
        let truth = inst.truth.as_ref().unwrap();
        let chosen = clustering_accuracy(res.chosen_labels(), truth).unwrap();
        let best = res
            .full_labels
            .iter()
            .map(|l| clustering_accuracy(l, truth).unwrap())
            .fold(0.0, f64::max);
        assert!(chosen >= best - 0.1, "chosen {chosen}, best {best}");
    }

    #[test]
    fn regularization_rejects_bad_input() {
        let inst = sparse_dcsbm(5);
        let cfg = EcvConfig::default();
        assert!(tune_regularization(&inst.adjacency, &[], 3, &cfg, &mut rng(0)).is_err());
        assert!(tune_regularization(&inst.adjacency, &[-0.1], 3, &cfg, &mut rng(0)).is_err());
        let w = AdjacencyMatrix::from_edges(4, false, true, [(0, 1, 2.0)]).unwrap();
        assert!(tune_regularization(&w, &[0.5], 2, &cfg, &mut rng(0)).is_err());
    }

    #[test]
    fn graphon_single_tau_and_ranks() {
        let inst = gen_graphon(120, GraphonKind::PiecewiseK3, &mut rng(6)).unwrap();
        let res = tune_graphon(
            &inst.adjacency,
            &[1.0],
            4,
            &EcvConfig::default(),
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(res.selection.chosen, Candidate::TauGraphon(1.0));
        assert_eq!(res.completion_ranks.len(), 3);
        assert!(res
            .completion_ranks
            .iter()
            .all(|r| matches!(r, Some(k) if (1..=4).contains(k))));
    }

    #[test]
    fn graphon_out_of_range_bandwidth_is_missing() {
        let inst = gen_graphon(60, GraphonKind::Smooth, &mut rng(8)).unwrap();
        // h = 100 * sqrt(ln 60 / 60) > 1
        let res = tune_graphon(
            &inst.adjacency,
            &[0.5, 100.0],
            3,
            &EcvConfig::default(),
            &mut rng(9),
        )
        .unwrap();
        assert_eq!(res.selection.mean_loss[1], None);
        assert_eq!(res.selection.chosen, Candidate::TauGraphon(0.5));
    }
}
