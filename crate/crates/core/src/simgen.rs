//! Synthetic networks with known edge-probability matrices.
//!
//! The recorded probability matrix `M` keeps its model value on the diagonal
//! (so block and low-rank structure is exact), but sampled networks never
//! contain self-loops.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::CommunityAssignment;
use crate::dense::DenseMatrix;
use crate::error::{invalid, Result};
use crate::netgraph::AdjacencyMatrix;

/// Size of the pool the DCSBM degree parameters are drawn from.
pub const THETA_POOL_SIZE: usize = 300;

/// Block models whose scaling clips more than this fraction of pairs are
/// flagged infeasible.
pub const INFEASIBLE_CLIP_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDesign {
    pub n: usize,
    pub k: usize,
    /// Target mean expected degree.
    pub lambda: f64,
    /// Community size imbalance exponent.
    pub t: f64,
    /// Out-in ratio.
    pub beta: f64,
    pub degree_corrected: bool,
}

impl BlockDesign {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(invalid(format!(
                "need 1 <= K <= n, got K = {} and n = {}",
                self.k, self.n
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(invalid(format!("t must be non-negative, got {}", self.t)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!(
                "beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if self.n < 2 {
            return Err(invalid("need at least 2 nodes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphonKind {
    /// Three equal blocks, within 1 and between 0.2, scaled to density 0.1.
    PiecewiseK3,
    /// `1 / (1 + exp(-5 (u^2 + v^2)))` rescaled linearly onto `[0.05, 0.5]`.
    Smooth,
}

impl GraphonKind {
    pub fn eval(self, u: f64, v: f64) -> f64 {
        match self {
            GraphonKind::PiecewiseK3 => {
                let block = |x: f64| ((3.0 * x) as usize).min(2);
                // mean of the unscaled blocks: 1/3 + (2/3) 0.2
                let scale = 0.1 / (1.0 / 3.0 + 2.0 / 3.0 * 0.2);
                scale * if block(u) == block(v) { 1.0 } else { 0.2 }
            }
            GraphonKind::Smooth => {
                let g = |u: f64, v: f64| 1.0 / (1.0 + (-5.0 * (u * u + v * v)).exp());
                let top = g(1.0, 1.0);
                0.05 + 0.45 * (g(u, v) - 0.5) / (top - 0.5)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub adjacency: AdjacencyMatrix,
    /// Community labels, for block models only.
    pub truth: Option<CommunityAssignment>,
    pub probabilities: DenseMatrix,
    /// Fraction of off-diagonal pairs whose probability was clipped to 1.
    pub clipped_fraction: f64,
    pub infeasible: bool,
}

impl PlantedInstance {
    /// Writes the sidecar truth file, one `node label` line per node.
    pub fn write_truth(&self, mut out: impl Write) -> Result<()> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| invalid("instance has no community labels"))?;
        for (i, c) in truth.labels().iter().enumerate() {
            writeln!(out, "{i} {c}")?;
        }
        Ok(())
    }
}

/// Community sizes proportional to `(1, 2^t, ..., K^t)`, rounded by largest
/// remainder; ties go to the smaller community index.
pub fn community_sizes(n: usize, k: usize, t: f64) -> Vec<usize> {
    let weights: Vec<f64> = (1..=k).map(|c| (c as f64).powf(t)).collect();
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        sizes[c] += 1;
    }
    sizes
}

/// Draw from the power law with density `4 x^-5` on `[1, inf)`.
pub fn power_law_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    (1.0 - u).powf(-0.25)
}

pub fn gen_block_model<R: Rng + ?Sized>(
    design: &BlockDesign,
    rng: &mut R,
) -> Result<PlantedInstance> {
    design.validate()?;
    let (n, k) = (design.n, design.k);
    let sizes = community_sizes(n, k, design.t);
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();

    let theta: Vec<f64> = if design.degree_corrected {
        let pool: Vec<f64> = (0..THETA_POOL_SIZE).map(|_| power_law_draw(rng)).collect();
        (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    } else {
        vec![1.0; n]
    };
    let b0 = |x: usize, y: usize| if x == y { 1.0 } else { design.beta };

    // sum over i != j of theta_i theta_j B0, from block totals
    let mut totals = vec![0.0; k];
    let mut squares = vec![0.0; k];
    for (i, &c) in labels.iter().enumerate() {
        totals[c] += theta[i];
        squares[c] += theta[i] * theta[i];
    }
    let mut mass = 0.0;
    for x in 0..k {
        for y in 0..k {
            mass += totals[x] * totals[y] * b0(x, y);
        }
        mass -= squares[x];
    }
    if mass <= 0.0 {
        return Err(invalid(
            "design has no between-node mass (beta = 0 with singleton blocks?)",
        ));
    }
    let scale = design.lambda * n as f64 / mass;

    let mut clipped = 0usize;
    let probabilities = DenseMatrix::from_fn(n, n, |i, j| {
        let raw = scale * theta[i] * theta[j] * b0(labels[i], labels[j]);
        if raw > 1.0 {
            if i != j {
                clipped += 1;
            }
            1.0
        } else {
            raw
        }
    });
    let clipped_fraction = clipped as f64 / (n * (n - 1)) as f64;
    let adjacency = sample_undirected(&probabilities, rng)?;
    Ok(PlantedInstance {
        adjacency,
        truth: Some(CommunityAssignment::new(labels, k)?),
        probabilities,
        clipped_fraction,
        infeasible: clipped_fraction > INFEASIBLE_CLIP_FRACTION,
    })
}

/// Directed random dot product graph `M = S1 S2^T / max(S1 S2^T)` with
/// uniform latent coordinates.
pub fn gen_rdpg_directed<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<PlantedInstance> {
    if k == 0 || k > n || n < 2 {
        return Err(invalid(format!(
            "need 1 <= K <= n and n >= 2, got K = {k}, n = {n}"
        )));
    }
    let s1: Vec<f64> = (0..n * k).map(|_| rng.gen()).collect();
    let s2: Vec<f64> = (0..n * k).map(|_| rng.gen()).collect();
    let raw = DenseMatrix::from_fn(n, n, |i, j| {
        (0..k).map(|c| s1[i * k + c] * s2[j * k + c]).sum()
    });
    let top = raw.max_abs();
    let probabilities = raw.map(|v| v / top);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen::<f64>() < probabilities.get(i, j) {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok(PlantedInstance {
        adjacency: AdjacencyMatrix::from_edges(n, true, false, edges)?,
        truth: None,
        probabilities,
        clipped_fraction: 0.0,
        infeasible: false,
    })
}

/// `M_ij = f(xi_i, xi_j)` with uniform latent positions.
pub fn gen_graphon<R: Rng + ?Sized>(
    n: usize,
    kind: GraphonKind,
    rng: &mut R,
) -> Result<PlantedInstance> {
    if n < 3 {
        return Err(invalid(format!("graphon samples need n >= 3, got {n}")));
    }
    let xi: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let probabilities = DenseMatrix::from_fn(n, n, |i, j| kind.eval(xi[i], xi[j]));
    let adjacency = sample_undirected(&probabilities, rng)?;
    Ok(PlantedInstance {
        adjacency,
        truth: None,
        probabilities,
        clipped_fraction: 0.0,
        infeasible: false,
    })
}

fn sample_undirected<R: Rng + ?Sized>(m: &DenseMatrix, rng: &mut R) -> Result<AdjacencyMatrix> {
    let n = m.rows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < m.get(i, j) {
                edges.push((i, j, 1.0));
            }
        }
    }
    AdjacencyMatrix::from_edges(n, false, false, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{partial_svd, SvdOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn design(n: usize, k: usize, lambda: f64, beta: f64, dc: bool) -> BlockDesign {
        BlockDesign {
            n,
            k,
            lambda,
            t: 0.0,
            beta,
            degree_corrected: dc,
        }
    }

    #[test]
    fn sizes_follow_largest_remainder() {
        assert_eq!(community_sizes(10, 3, 0.0), vec![4, 3, 3]);
        assert_eq!(community_sizes(600, 3, 0.0), vec![200, 200, 200]);
        // weights 1, 2, 3 -> 100 / 6 * (1, 2, 3) = 16.67, 33.33, 50
        assert_eq!(community_sizes(100, 3, 1.0), vec![17, 33, 50]);
        for n in [7, 50, 601] {
            for t in [0.0, 0.5, 1.0, 2.0] {
                let s = community_sizes(n, 4, t);
                assert_eq!(s.iter().sum::<usize>(), n);
                if t == 0.0 {
                    assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
                }
            }
        }
    }

    #[test]
    fn beta_zero_is_block_diagonal() {
        let inst = gen_block_model(&design(40, 2, 5.0, 0.0, false), &mut rng(1)).unwrap();
        let truth = inst.truth.as_ref().unwrap();
        for i in 0..40 {
            for j in 0..40 {
                if truth.label(i) != truth.label(j) {
                    assert_eq!(inst.probabilities.get(i, j), 0.0);
                    assert_eq!(inst.adjacency.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn sbm_is_constant_within_block_pairs() {
        let inst = gen_block_model(&design(60, 3, 8.0, 0.3, false), &mut rng(2)).unwrap();
        let truth = inst.truth.as_ref().unwrap();
        let mut values = std::collections::HashMap::new();
        for i in 0..60 {
            for j in 0..60 {
                let key = (truth.label(i), truth.label(j));
                let v = inst.probabilities.get(i, j);
                assert_eq!(*values.entry(key).or_insert(v), v);
            }
        }
        assert!(inst.probabilities.is_symmetric(0.0));
        assert!(!inst.adjacency.is_directed());
    }

    #[test]
    fn expected_degree_matches_lambda() {
        for dc in [false, true] {
            let inst = gen_block_model(&design(300, 3, 5.0, 0.2, dc), &mut rng(3)).unwrap();
            let m = &inst.probabilities;
            let offdiag: f64 = (0..300)
                .flat_map(|i| (0..300).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j))
                .sum();
            assert!((offdiag / 300.0 - 5.0).abs() < 1e-9, "dc = {dc}");
            assert_eq!(inst.clipped_fraction, 0.0);
        }
    }

    #[test]
    fn empirical_mean_degree_near_lambda() {
        let mut r = rng(4);
        let d = design(600, 3, 40.0, 0.2, true);
        let draws = 50;
        let mut total = 0.0;
        for _ in 0..draws {
            total += gen_block_model(&d, &mut r).unwrap().adjacency.mean_degree();
        }
        let mean = total / draws as f64;
        assert!((mean - 40.0).abs() < 0.05 * 40.0, "mean degree {mean}");
    }

    #[test]
    fn infeasible_designs_are_flagged() {
        let inst = gen_block_model(&design(20, 2, 15.0, 1.0, true), &mut rng(5)).unwrap();
        assert!(inst.clipped_fraction > 0.0);
        assert!(inst
            .probabilities
            .as_slice()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        let easy = gen_block_model(&design(200, 2, 10.0, 0.5, false), &mut rng(5)).unwrap();
        assert!(!easy.infeasible);
        // lambda above n - 1 forces every pair to clip
        let dense = gen_block_model(&design(20, 1, 30.0, 1.0, false), &mut rng(5)).unwrap();
        assert!(dense.infeasible);
    }

    #[test]
    fn power_law_tail() {
        // P(X > 2) = 2^-4 = 1/16 for density 4 x^-5.
        let mut r = rng(6);
        let draws = 40_000;
        let above = (0..draws).filter(|_| power_law_draw(&mut r) > 2.0).count();
        let freq = above as f64 / draws as f64;
        assert!((freq - 1.0 / 16.0).abs() < 0.005, "tail frequency {freq}");
    }

    #[test]
    fn same_seed_same_instance() {
        let d = design(80, 3, 10.0, 0.2, true);
        let a = gen_block_model(&d, &mut rng(7)).unwrap();
        let b = gen_block_model(&d, &mut rng(7)).unwrap();
        assert_eq!(a.adjacency, b.adjacency);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.probabilities, b.probabilities);
    }

    #[test]
    fn rdpg_properties() {
        let inst = gen_rdpg_directed(60, 1, &mut rng(8)).unwrap();
        assert!(inst.adjacency.is_directed());
        assert_eq!(inst.probabilities.max_abs(), 1.0);
        let svd = partial_svd(&inst.probabilities, 2, &SvdOptions::default(), &mut rng(0)).unwrap();
        assert!(svd.sigma[1] < 1e-10 * svd.sigma[0]);

        let three = gen_rdpg_directed(60, 3, &mut rng(9)).unwrap();
        let svd =
            partial_svd(&three.probabilities, 4, &SvdOptions::default(), &mut rng(0)).unwrap();
        assert!(svd.sigma[2] > 1e-6 && svd.sigma[3] < 1e-10 * svd.sigma[0]);
    }

    #[test]
    fn rdpg_density_matches_mean_probability() {
        let mut r = rng(10);
        let n = 100;
        let (mut observed, mut expected) = (0.0, 0.0);
        for _ in 0..50 {
            let inst = gen_rdpg_directed(n, 3, &mut r).unwrap();
            observed += inst.adjacency.edge_count() as f64;
            expected += (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| inst.probabilities.get(i, j))
                .sum::<f64>();
        }
        assert!((observed / expected - 1.0).abs() < 0.01);
    }

    /// Midpoint rule on a fine grid.
    fn integral(kind: GraphonKind) -> f64 {
        let steps = 600;
        let h = 1.0 / steps as f64;
        let mut total = 0.0;
        for a in 0..steps {
            for b in 0..steps {
                total += kind.eval((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
            }
        }
        total * h * h
    }

    #[test]
    fn graphon_means_match_quadrature() {
        assert!((integral(GraphonKind::PiecewiseK3) - 0.1).abs() < 1e-3);
        for kind in [GraphonKind::PiecewiseK3, GraphonKind::Smooth] {
            let mut r = rng(11);
            let n = 300;
            let mut total = 0.0;
            let draws = 20;
            for _ in 0..draws {
                let m = gen_graphon(n, kind, &mut r).unwrap().probabilities;
                total += m.as_slice().iter().sum::<f64>() / (n * n) as f64;
            }
            let mean = total / draws as f64;
            let exact = integral(kind);
            assert!(
                (mean - exact).abs() < 0.05 * exact,
                "{kind:?}: {mean} vs {exact}"
            );
        }
    }

    #[test]
    fn graphon_ranges() {
        let m = gen_graphon(90, GraphonKind::PiecewiseK3, &mut rng(12))
            .unwrap()
            .probabilities;
        let mut distinct: Vec<f64> = m.as_slice().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() <= 6);
        assert!(m.is_symmetric(0.0));

        let s = gen_graphon(90, GraphonKind::Smooth, &mut rng(12))
            .unwrap()
            .probabilities;
        assert!(s.is_symmetric(0.0));
        assert!(s
            .as_slice()
            .iter()
            .all(|&v| (0.05 - 1e-12..=0.5 + 1e-12).contains(&v)));
        assert!((GraphonKind::Smooth.eval(0.0, 0.0) - 0.05).abs() < 1e-15);
        assert!((GraphonKind::Smooth.eval(1.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn truth_file_lines() {
        let inst = gen_block_model(&design(4, 2, 1.0, 0.5, false), &mut rng(13)).unwrap();
        let mut out = Vec::new();
        inst.write_truth(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 0\n1 0\n2 1\n3 1\n");
        let g = gen_graphon(5, GraphonKind::Smooth, &mut rng(13)).unwrap();
        assert!(g.write_truth(Vec::new()).is_err());
    }
}
