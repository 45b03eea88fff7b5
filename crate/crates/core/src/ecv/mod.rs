//! Edge cross-validation.
//!
//! Every driver follows the same loop. Each split samples a training set of
//! node pairs, optionally completes the network from it, scores each candidate
//! on the held-out pairs, and the candidate with the smallest split-averaged
//! loss wins. Ties go to the simpler candidate (see [`Candidate::simplicity`]).

mod blocks;
mod stability;
mod tuning;

pub use blocks::{select_block_model, select_rank};
pub use stability::{choice_counts, stability_runs, stability_select, StabilityMode};
pub use tuning::{
    regularized_spectral_clustering, tune_graphon, tune_regularization, GraphonTuning,
    RegularizationTuning, FULL_NETWORK_SVD,
};

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EcvError, Result};
use crate::holdout::HoldoutMask;
use crate::lowrank::{complete_with, CompletedMatrix, SvdOptions};
use crate::metrics::{auc, deviance_loss, sse_loss, PairScoreSet};
use crate::netgraph::AdjacencyMatrix;
use crate::rng::{derive, fork_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Sbm,
    Dcsbm,
    Rank,
    TauReg,
    TauGraphon,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Sbm => "SBM",
            Family::Dcsbm => "DCSBM",
            Family::Rank => "RANK",
            Family::TauReg => "TAU_REG",
            Family::TauGraphon => "TAU_GRAPHON",
        }
    }

    /// Whether candidates of this family carry an integer `K`.
    pub fn is_integer(self) -> bool {
        matches!(self, Family::Sbm | Family::Dcsbm | Family::Rank)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One model or tuning value on a selection menu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Candidate {
    Sbm(usize),
    Dcsbm(usize),
    Rank(usize),
    TauReg(f64),
    TauGraphon(f64),
}

impl Candidate {
    pub fn family(&self) -> Family {
        match self {
            Candidate::Sbm(_) => Family::Sbm,
            Candidate::Dcsbm(_) => Family::Dcsbm,
            Candidate::Rank(_) => Family::Rank,
            Candidate::TauReg(_) => Family::TauReg,
            Candidate::TauGraphon(_) => Family::TauGraphon,
        }
    }

    /// `K` or `tau` as a number.
    pub fn value(&self) -> f64 {
        match *self {
            Candidate::Sbm(k) | Candidate::Dcsbm(k) | Candidate::Rank(k) => k as f64,
            Candidate::TauReg(t) | Candidate::TauGraphon(t) => t,
        }
    }

    pub fn k(&self) -> Option<usize> {
        match *self {
            Candidate::Sbm(k) | Candidate::Dcsbm(k) | Candidate::Rank(k) => Some(k),
            _ => None,
        }
    }

    /// Builds a candidate of `family` from a value, rounding to an integer
    /// for `K` families.
    pub fn from_value(family: Family, value: f64) -> Result<Self> {
        let k = || {
            if value.is_finite() && value >= 0.5 {
                Ok(value.round() as usize)
            } else {
                Err(invalid(format!("{value} is not a valid K")))
            }
        };
        let c = match family {
            Family::Sbm => Candidate::Sbm(k()?),
            Family::Dcsbm => Candidate::Dcsbm(k()?),
            Family::Rank => Candidate::Rank(k()?),
            Family::TauReg => Candidate::TauReg(value),
            Family::TauGraphon => Candidate::TauGraphon(value),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Candidate::Sbm(0) | Candidate::Dcsbm(0) | Candidate::Rank(0) => {
                Err(invalid("candidate K must be at least 1"))
            }
            Candidate::TauReg(t) | Candidate::TauGraphon(t) if !(t >= 0.0 && t.is_finite()) => {
                Err(invalid(format!(
                    "candidate tau must be finite and non-negative, got {t}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Parsimony order: smaller `K` or `tau` first, then SBM before DCSBM.
    pub fn simplicity(&self, other: &Candidate) -> Ordering {
        self.value()
            .total_cmp(&other.value())
            .then(self.family().cmp(&other.family()))
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::TauReg(t) | Candidate::TauGraphon(t) => write!(f, "{}-{t}", self.family()),
            _ => write!(f, "{}-{}", self.family(), self.value()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Mean squared error (the L2 loss, also called SSE).
    L2,
    Deviance,
    /// Stored as `1 - AUC`.
    Auc,
}

impl Loss {
    pub fn evaluate(self, scores: &PairScoreSet) -> Result<f64> {
        match self {
            Loss::L2 => sse_loss(scores),
            Loss::Deviance => deviance_loss(scores),
            Loss::Auc => auc(scores).map(|v| 1.0 - v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcvConfig {
    /// Training fraction of node pairs.
    pub p: f64,
    pub n_splits: usize,
    /// Solver settings for every completion and spectral embedding.
    pub svd: SvdOptions,
    /// K-means restarts per clustering.
    pub restarts: usize,
}

impl Default for EcvConfig {
    fn default() -> Self {
        Self {
            p: 0.9,
            n_splits: 3,
            svd: SvdOptions::with_tolerance(1e-3, 10),
            restarts: crate::cluster::DEFAULT_RESTARTS,
        }
    }
}

impl EcvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid(format!("ECV needs 0 < p < 1, got {}", self.p)));
        }
        if self.n_splits == 0 {
            return Err(invalid("ECV needs at least one split"));
        }
        if self.restarts == 0 {
            return Err(invalid("k-means needs at least one restart"));
        }
        Ok(())
    }
}

/// Losses of every candidate on every split and the selected candidate.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub candidates: Vec<Candidate>,
    /// `losses[m][q]`: loss of candidate `q` on split `m`, `None` if missing.
    pub losses: Vec<Vec<Option<f64>>>,
    /// Mean over the splits where the loss is present; `None` if missing in
    /// every split.
    pub mean_loss: Vec<Option<f64>>,
    pub chosen: Candidate,
}

impl SelectionResult {
    fn from_losses(candidates: Vec<Candidate>, losses: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let mean_loss: Vec<Option<f64>> = (0..candidates.len())
            .map(|q| {
                let present: Vec<f64> = losses.iter().filter_map(|row| row[q]).collect();
                if present.is_empty() {
                    None
                } else {
                    Some(present.iter().sum::<f64>() / present.len() as f64)
                }
            })
            .collect();
        let q = argmin_simplest(&candidates, &mean_loss).ok_or(EcvError::NoValidCandidate)?;
        Ok(Self {
            chosen: candidates[q],
            candidates,
            losses,
            mean_loss,
        })
    }

    pub fn mean_loss_of(&self, candidate: &Candidate) -> Option<f64> {
        self.candidates
            .iter()
            .position(|c| c == candidate)
            .and_then(|q| self.mean_loss[q])
    }

    /// Mean loss of the chosen candidate.
    pub fn best_loss(&self) -> f64 {
        self.mean_loss_of(&self.chosen)
            .expect("chosen candidate has a loss")
    }
}

/// Relative slack under which two mean losses count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

fn argmin_simplest(candidates: &[Candidate], losses: &[Option<f64>]) -> Option<usize> {
    let best = losses
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let slack = TIE_TOLERANCE * best.abs().max(1.0);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].simplicity(&candidates[b]));
    order
        .into_iter()
        .find(|&q| matches!(losses[q], Some(l) if l <= best + slack))
}

/// What a split evaluator gets to see.
pub struct SplitContext<'a> {
    pub index: usize,
    pub adjacency: &'a AdjacencyMatrix,
    pub mask: HoldoutMask,
    /// Completion at the rank requested by the driver, if any.
    pub completed: Option<CompletedMatrix>,
    /// `A_ij` for each held-out pair, aligned with `mask.held_out()`.
    pub truths: Vec<f64>,
    pub candidates: &'a [Candidate],
    pub config: &'a EcvConfig,
    candidate_seed: u64,
}

impl SplitContext<'_> {
    /// Independent generator for candidate `q` on this split.
    pub fn candidate_rng(&self, q: usize) -> StreamRng {
        derive(self.candidate_seed, q as u64)
    }

    pub fn completed(&self) -> Result<&CompletedMatrix> {
        self.completed
            .as_ref()
            .ok_or_else(|| invalid("driver did not request a completion"))
    }

    /// Scores predictions aligned with the held-out pairs.
    pub fn scores(&self, predictions: Vec<f64>) -> Result<PairScoreSet> {
        PairScoreSet::new(
            self.mask.held_out().to_vec(),
            self.truths.clone(),
            predictions,
        )
    }

    /// Scores `f(i, j)` on the held-out pairs.
    pub fn score_fn(&self, f: impl Fn(usize, usize) -> f64) -> PairScoreSet {
        PairScoreSet {
            pairs: self.mask.held_out().to_vec(),
            truths: self.truths.clone(),
            preds: self.mask.held_out().iter().map(|&(i, j)| f(i, j)).collect(),
        }
    }
}

/// Runs `cfg.n_splits` splits and lets `evaluate` return one loss per
/// candidate for each. A failing split counts as missing for every candidate.
///
/// Splits run in parallel; each draws from its own stream derived from a seed
/// taken from `rng`, so the result does not depend on scheduling.
pub fn ecv_splits<R, F>(
    a: &AdjacencyMatrix,
    candidates: &[Candidate],
    completion_rank: Option<usize>,
    cfg: &EcvConfig,
    rng: &mut R,
    evaluate: F,
) -> Result<SelectionResult>
where
    R: Rng + ?Sized,
    F: Fn(&SplitContext<'_>) -> Result<Vec<Option<f64>>> + Sync,
{
    cfg.validate()?;
    let candidates = dedup_candidates(candidates)?;
    if let Some(k) = completion_rank {
        if k == 0 || k > a.n() {
            return Err(invalid(format!(
                "completion rank {k} outside 1..={}",
                a.n()
            )));
        }
    }
    let base = fork_seed(rng);
    let q = candidates.len();
    let rows: Vec<Result<Vec<Option<f64>>>> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|m| -> Result<Vec<Option<f64>>> {
            let mut r = derive(base, m as u64);
            let mask = HoldoutMask::sample(a.n(), cfg.p, a.is_directed(), &mut r)?;
            let completed = match completion_rank {
                Some(k) => Some(complete_with(a, &mask, k, &cfg.svd, &mut r)?),
                None => None,
            };
            let truths = mask.held_out().iter().map(|&(i, j)| a.get(i, j)).collect();
            let ctx = SplitContext {
                index: m,
                adjacency: a,
                mask,
                completed,
                truths,
                candidates: &candidates,
                config: cfg,
                candidate_seed: fork_seed(&mut r),
            };
            let row = evaluate(&ctx).unwrap_or_else(|_| vec![None; q]);
            if row.len() != q {
                return Err(EcvError::DimensionMismatch(format!(
                    "evaluator returned {} losses for {q} candidates",
                    row.len()
                )));
            }
            Ok(row)
        })
        .collect();
    let losses = rows.into_iter().collect::<Result<Vec<_>>>()?;
    SelectionResult::from_losses(candidates, losses)
}

/// Generic ECV: `predict` returns a prediction for every held-out pair of the
/// split, and `loss` scores them. A failing prediction or an undefined loss
/// marks that candidate missing on that split.
pub fn ecv_generic<R, F>(
    a: &AdjacencyMatrix,
    candidates: &[Candidate],
    completion_rank: Option<usize>,
    loss: Loss,
    cfg: &EcvConfig,
    rng: &mut R,
    predict: F,
) -> Result<SelectionResult>
where
    R: Rng + ?Sized,
    F: Fn(&SplitContext<'_>, &Candidate, &mut StreamRng) -> Result<Vec<f64>> + Sync,
{
    ecv_splits(a, candidates, completion_rank, cfg, rng, |ctx| {
        Ok(ctx
            .candidates
            .iter()
            .enumerate()
            .map(|(q, c)| {
                let preds = predict(ctx, c, &mut ctx.candidate_rng(q)).ok()?;
                loss.evaluate(&ctx.scores(preds).ok()?).ok()
            })
            .collect())
    })
}

fn dedup_candidates(candidates: &[Candidate]) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(invalid("candidate menu is empty"));
    }
    let mut out: Vec<Candidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        c.validate()?;
        if !out.contains(c) {
            out.push(*c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn planted(n: usize, seed: u64) -> (AdjacencyMatrix, DenseMatrix) {
        let m = DenseMatrix::from_fn(n, n, |i, j| if (i % 2) == (j % 2) { 0.3 } else { 0.05 });
        let mut r = rng(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.gen::<f64>() < m.get(i, j) {
                    edges.push((i, j, 1.0));
                }
            }
        }
        (
            AdjacencyMatrix::from_edges(n, false, false, edges).unwrap(),
            m,
        )
    }

    #[test]
    fn single_candidate_is_chosen() {
        let (a, _) = planted(30, 1);
        let res = ecv_generic(
            &a,
            &[Candidate::Rank(2)],
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(0),
            |ctx, _, _| Ok(vec![0.1; ctx.mask.held_out().len()]),
        )
        .unwrap();
        assert_eq!(res.chosen, Candidate::Rank(2));
        assert_eq!(res.losses.len(), 3);
    }

    #[test]
    fn ties_go_to_the_simpler_candidate() {
        let (a, _) = planted(30, 2);
        let menu = [
            Candidate::Dcsbm(2),
            Candidate::Sbm(3),
            Candidate::Sbm(2),
            Candidate::Dcsbm(1),
        ];
        let res = ecv_generic(
            &a,
            &menu,
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(0),
            |ctx, _, _| Ok(vec![0.2; ctx.mask.held_out().len()]),
        )
        .unwrap();
        assert_eq!(res.chosen, Candidate::Dcsbm(1));

        let menu = [Candidate::Dcsbm(2), Candidate::Sbm(2)];
        let res = ecv_generic(
            &a,
            &menu,
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(0),
            |ctx, _, _| Ok(vec![0.2; ctx.mask.held_out().len()]),
        )
        .unwrap();
        assert_eq!(res.chosen, Candidate::Sbm(2));
    }

    #[test]
    fn true_probabilities_beat_scrambled_ones() {
        let (a, m) = planted(200, 3);
        // Candidate 1 predicts the truth, candidate 2 swaps the in/out values.
        let menu = [Candidate::Rank(1), Candidate::Rank(2)];
        let res = ecv_generic(
            &a,
            &menu,
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(4),
            |ctx, c, _| {
                Ok(ctx
                    .mask
                    .held_out()
                    .iter()
                    .map(|&(i, j)| {
                        if c.value() == 1.0 {
                            m.get(i, j)
                        } else {
                            0.35 - m.get(i, j)
                        }
                    })
                    .collect())
            },
        )
        .unwrap();
        assert_eq!(res.chosen, Candidate::Rank(1));
    }

    #[test]
    fn failures_are_missing_and_all_missing_is_an_error() {
        let (a, _) = planted(30, 5);
        let menu = [Candidate::Rank(1), Candidate::Rank(2)];
        let res = ecv_generic(
            &a,
            &menu,
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(0),
            |ctx, c, _| {
                if c.value() == 1.0 {
                    Err(invalid("boom"))
                } else {
                    Ok(vec![0.5; ctx.mask.held_out().len()])
                }
            },
        )
        .unwrap();
        assert_eq!(res.chosen, Candidate::Rank(2));
        assert_eq!(res.mean_loss[0], None);

        let err = ecv_generic(
            &a,
            &menu,
            None,
            Loss::L2,
            &EcvConfig::default(),
            &mut rng(0),
            |_, _, _| Err(invalid("boom")),
        );
        assert!(matches!(err, Err(EcvError::NoValidCandidate)));
    }

    #[test]
    fn partially_missing_losses_average_present_splits() {
        let (a, _) = planted(30, 6);
        let menu = [Candidate::Rank(1)];
        let res = ecv_splits(&a, &menu, None, &EcvConfig::default(), &mut rng(0), |ctx| {
            Ok(vec![if ctx.index == 1 {
                None
            } else {
                Some(ctx.index as f64)
            }])
        })
        .unwrap();
        assert_eq!(res.mean_loss[0], Some(1.0));
    }

    #[test]
    fn duplicate_candidates_are_merged() {
        let (a, _) = planted(30, 7);
        let menu = [Candidate::TauReg(0.5), Candidate::TauReg(0.5)];
        let res = ecv_splits(&a, &menu, None, &EcvConfig::default(), &mut rng(0), |ctx| {
            Ok(vec![Some(1.0); ctx.candidates.len()])
        })
        .unwrap();
        assert_eq!(res.candidates, vec![Candidate::TauReg(0.5)]);
    }

    #[test]
    fn rejects_bad_configuration() {
        let (a, _) = planted(30, 8);
        let eval = |ctx: &SplitContext<'_>| Ok(vec![Some(0.0); ctx.candidates.len()]);
        for p in [0.0, 1.0, 1.5] {
            let cfg = EcvConfig {
                p,
                ..EcvConfig::default()
            };
            assert!(ecv_splits(&a, &[Candidate::Rank(1)], None, &cfg, &mut rng(0), eval).is_err());
        }
        let cfg = EcvConfig {
            n_splits: 0,
            ..EcvConfig::default()
        };
        assert!(ecv_splits(&a, &[Candidate::Rank(1)], None, &cfg, &mut rng(0), eval).is_err());
        assert!(ecv_splits(&a, &[], None, &EcvConfig::default(), &mut rng(0), eval).is_err());
        assert!(ecv_splits(
            &a,
            &[Candidate::Sbm(0)],
            None,
            &EcvConfig::default(),
            &mut rng(0),
            eval
        )
        .is_err());
        assert!(ecv_splits(
            &a,
            &[Candidate::TauReg(-1.0)],
            None,
            &EcvConfig::default(),
            &mut rng(0),
            eval
        )
        .is_err());
    }

    #[test]
    fn same_seed_same_result() {
        let (a, _) = planted(60, 9);
        let run = |seed| {
            ecv_generic(
                &a,
                &[Candidate::Rank(1), Candidate::Rank(2)],
                Some(2),
                Loss::L2,
                &EcvConfig::default(),
                &mut rng(seed),
                |ctx, c, _| {
                    let k = c.k().unwrap();
                    let comp = ctx.completed()?.truncated(k)?;
                    Ok(ctx
                        .mask
                        .held_out()
                        .iter()
                        .map(|&(i, j)| comp.entry(i, j))
                        .collect())
                },
            )
            .unwrap()
        };
        let (x, y, z) = (run(11), run(11), run(12));
        assert_eq!(x.losses, y.losses);
        assert_ne!(x.losses, z.losses);
    }

    #[test]
    fn candidate_helpers() {
        assert_eq!(Candidate::Sbm(3).to_string(), "SBM-3");
        assert_eq!(Candidate::TauReg(0.5).to_string(), "TAU_REG-0.5");
        assert_eq!(
            Candidate::from_value(Family::Rank, 3.6).unwrap(),
            Candidate::Rank(4)
        );
        assert!(Candidate::from_value(Family::Sbm, 0.2).is_err());
        assert_eq!(
            Candidate::Sbm(3).simplicity(&Candidate::Dcsbm(3)),
            Ordering::Less
        );
        assert_eq!(
            Candidate::Dcsbm(2).simplicity(&Candidate::Sbm(3)),
            Ordering::Less
        );
    }
}
