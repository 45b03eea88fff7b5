use rand::Rng;

use super::{ecv_generic, Candidate, EcvConfig, Loss, SelectionResult};
use crate::blockmodel::{estimate, ModelKind};
use crate::cluster::cluster_embedding;
use crate::error::{invalid, EcvError, Result};
use crate::netgraph::AdjacencyMatrix;

/// Chooses among SBM-K and DCSBM-K for `K = 1..=kmax`.
///
/// Each split is completed once at rank `kmax`; the rank-`K` completion is
/// its leading `K` triplets. SBM candidates use spectral clustering of the
/// completed matrix, DCSBM candidates its spherical variant.
pub fn select_block_model<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    kmax: usize,
    loss: Loss,
    cfg: &EcvConfig,
    rng: &mut R,
) -> Result<SelectionResult> {
    if a.is_directed() {
        return Err(EcvError::Unsupported(
            "block model selection needs an undirected network".into(),
        ));
    }
    check_kmax(kmax, a.n())?;
    let candidates: Vec<Candidate> = (1..=kmax)
        .flat_map(|k| [Candidate::Sbm(k), Candidate::Dcsbm(k)])
        .collect();
    ecv_generic(a, &candidates, Some(kmax), loss, cfg, rng, |ctx, c, r| {
        let (kind, k) = match *c {
            Candidate::Sbm(k) => (ModelKind::Sbm, k),
            Candidate::Dcsbm(k) => (ModelKind::Dcsbm, k),
            _ => unreachable!("menu holds block models only"),
        };
        let completed = ctx.completed()?;
        let vectors = completed.u().columns(0, k).into_owned();
        let labels = cluster_embedding(
            &vectors,
            k,
            kind == ModelKind::Dcsbm,
            ctx.config.restarts,
            r,
        )?;
        let model = estimate(kind, ctx.adjacency, &ctx.mask, &labels)?;
        Ok(ctx
            .mask
            .held_out()
            .iter()
            .map(|&(i, j)| model.probability(i, j))
            .collect())
    })
}

/// Chooses the completion rank `K = 1..=kmax` by how well the rank-`K`
/// completion predicts the held-out entries.
pub fn select_rank<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    kmax: usize,
    loss: Loss,
    cfg: &EcvConfig,
    rng: &mut R,
) -> Result<SelectionResult> {
    if loss != Loss::L2 && a.is_weighted() {
        return Err(EcvError::Unsupported(
            "AUC and deviance losses need a binary network".into(),
        ));
    }
    check_kmax(kmax, a.n())?;
    let candidates: Vec<Candidate> = (1..=kmax).map(Candidate::Rank).collect();
    ecv_generic(a, &candidates, Some(kmax), loss, cfg, rng, |ctx, c, _| {
        let completed = ctx.completed()?.truncated(c.k().expect("rank candidate"))?;
        Ok(ctx
            .mask
            .held_out()
            .iter()
            .map(|&(i, j)| completed.entry(i, j))
            .collect())
    })
}

fn check_kmax(kmax: usize, n: usize) -> Result<()> {
    if kmax == 0 || kmax > n {
        return Err(invalid(format!("Kmax must be in 1..={n}, got {kmax}")));
    }
    Ok(())
}
