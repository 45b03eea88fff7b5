//! Held-out losses and partition comparison measures.

use std::collections::HashMap;

use crate::cluster::CommunityAssignment;
use crate::error::{invalid, EcvError, Result};

/// Clip applied to predicted probabilities in the binomial deviance.
pub const DEVIANCE_CLIP: f64 = 1e-6;

/// Observed values and predictions on held-out node pairs.
#[derive(Debug, Clone, Default)]
pub struct PairScoreSet {
    pub pairs: Vec<(usize, usize)>,
    pub truths: Vec<f64>,
    pub preds: Vec<f64>,
}

impl PairScoreSet {
    pub fn new(pairs: Vec<(usize, usize)>, truths: Vec<f64>, preds: Vec<f64>) -> Result<Self> {
        if pairs.len() != truths.len() || pairs.len() != preds.len() {
            return Err(EcvError::DimensionMismatch(format!(
                "{} pairs, {} truths, {} predictions",
                pairs.len(),
                truths.len(),
                preds.len()
            )));
        }
        Ok(Self {
            pairs,
            truths,
            preds,
        })
    }

    /// Scores `predict(i, j)` against `truth(i, j)` on the given pairs.
    pub fn from_fn(
        pairs: &[(usize, usize)],
        truth: impl Fn(usize, usize) -> f64,
        predict: impl Fn(usize, usize) -> f64,
    ) -> Self {
        Self {
            pairs: pairs.to_vec(),
            truths: pairs.iter().map(|&(i, j)| truth(i, j)).collect(),
            preds: pairs.iter().map(|&(i, j)| predict(i, j)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(EcvError::UndefinedLoss("no held-out pairs".into()));
        }
        Ok(())
    }

    fn require_binary(&self) -> Result<()> {
        if self.truths.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(EcvError::Unsupported(
                "loss needs binary observations".into(),
            ));
        }
        Ok(())
    }
}

/// Mean squared error over the held-out pairs.
pub fn sse_loss(s: &PairScoreSet) -> Result<f64> {
    s.require_nonempty()?;
    let total: f64 = s
        .truths
        .iter()
        .zip(&s.preds)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(total / s.len() as f64)
}

/// Mean binomial deviance with predictions clipped to
/// `[DEVIANCE_CLIP, 1 - DEVIANCE_CLIP]`.
pub fn deviance_loss(s: &PairScoreSet) -> Result<f64> {
    s.require_nonempty()?;
    s.require_binary()?;
    let total: f64 = s
        .truths
        .iter()
        .zip(&s.preds)
        .map(|(&x, &y)| {
            let y = y.clamp(DEVIANCE_CLIP, 1.0 - DEVIANCE_CLIP);
            -x * y.ln() - (1.0 - x) * (1.0 - y).ln()
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney statistic with average ranks
/// for ties.
pub fn auc(s: &PairScoreSet) -> Result<f64> {
    s.require_binary()?;
    if s.preds.iter().any(|p| !p.is_finite()) {
        return Err(EcvError::NonFinite);
    }
    let positives = s.truths.iter().filter(|&&t| t == 1.0).count();
    let negatives = s.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EcvError::UndefinedLoss("AUC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.preds[a].total_cmp(&s.preds[b]));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && s.preds[order[end]] == s.preds[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the average 1-based rank
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end]
            .iter()
            .filter(|&&i| s.truths[i] == 1.0)
            .count();
        positive_rank_sum += avg_rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Co-clustering difference between the pair partitions induced by two
/// labelings, restricted to `pairs`.
///
/// Each pair `(i, j)` falls in the class `{c_i, c_j}` (unordered). The result
/// equals half the squared Frobenius distance between the two `|pairs| x
/// |pairs|` co-membership indicator matrices, computed from class sizes.
pub fn ccd(
    labels1: &CommunityAssignment,
    labels2: &CommunityAssignment,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    if labels1.n() != labels2.n() {
        return Err(EcvError::DimensionMismatch(format!(
            "labelings of {} and {} nodes",
            labels1.n(),
            labels2.n()
        )));
    }
    if pairs.is_empty() {
        return Err(invalid("no pairs to compare"));
    }
    let class = |c: &CommunityAssignment, i: usize, j: usize| {
        let (a, b) = (c.label(i), c.label(j));
        (a.min(b), a.max(b))
    };
    // A pair's class is its unordered pair of community labels.
    type Class = (usize, usize);
    let mut first: HashMap<Class, u64> = HashMap::new();
    let mut second: HashMap<Class, u64> = HashMap::new();
    let mut joint: HashMap<(Class, Class), u64> = HashMap::new();
    for &(i, j) in pairs {
        let h1 = class(labels1, i, j);
        let h2 = class(labels2, i, j);
        *first.entry(h1).or_default() += 1;
        *second.entry(h2).or_default() += 1;
        *joint.entry((h1, h2)).or_default() += 1;
    }
    let mismatches = sum_sq(first.values()) + sum_sq(second.values()) - 2 * sum_sq(joint.values());
    Ok(mismatches as f64 / 2.0)
}

fn sum_sq<'a>(counts: impl Iterator<Item = &'a u64>) -> u128 {
    counts.map(|&c| (c as u128) * (c as u128)).sum()
}

/// Normalized mutual information `I / sqrt(H1 H2)`; 1 when both labelings are
/// constant, 0 when exactly one is.
pub fn nmi(labels1: &CommunityAssignment, labels2: &CommunityAssignment) -> Result<f64> {
    let n = labels1.n();
    if n != labels2.n() || n == 0 {
        return Err(EcvError::DimensionMismatch(format!(
            "labelings of {} and {} nodes",
            n,
            labels2.n()
        )));
    }
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..n {
        *joint
            .entry((labels1.label(i), labels2.label(i)))
            .or_default() += 1;
    }
    let a = labels1.sizes();
    let b = labels2.sizes();
    let nf = n as f64;
    let entropy = |sizes: &[usize]| {
        -sizes
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let q = c as f64 / nf;
                q * q.ln()
            })
            .sum::<f64>()
    };
    let (h1, h2) = (entropy(&a), entropy(&b));
    let zero1 = h1 <= 1e-15;
    let zero2 = h2 <= 1e-15;
    if zero1 && zero2 {
        return Ok(1.0);
    }
    if zero1 || zero2 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / nf;
            pxy * (pxy * nf * nf / (a[x] as f64 * b[y] as f64)).ln()
        })
        .sum();
    Ok((mi / (h1 * h2).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of nodes labeled correctly under the best matching of estimated
/// to true labels.
pub fn clustering_accuracy(est: &CommunityAssignment, truth: &CommunityAssignment) -> Result<f64> {
    let n = est.n();
    if n != truth.n() {
        return Err(EcvError::DimensionMismatch(format!(
            "labelings of {} and {} nodes",
            n,
            truth.n()
        )));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let k = est.k().max(truth.k());
    let mut confusion = vec![vec![0i64; k]; k];
    for i in 0..n {
        confusion[est.label(i)][truth.label(i)] += 1;
    }
    let cost: Vec<Vec<i64>> = confusion
        .iter()
        .map(|row| row.iter().map(|&c| -c).collect())
        .collect();
    let assignment = hungarian(&cost);
    let matched: i64 = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| confusion[r][c])
        .sum();
    Ok(matched as f64 / n as f64)
}

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials, column 0 is a sentinel.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = INF;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if row_of_col[col] > 0 {
            assignment[row_of_col[col] - 1] = col - 1;
        }
    }
    assignment
}
