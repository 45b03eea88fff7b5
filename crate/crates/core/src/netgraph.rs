//! Network representation: adjacency storage, degrees, Laplacians,
//! regularization, core extraction, and the edge-list text format.
//!
//! The edge-list format is one edge per line, `i j` (binary) or `i j w`
//! (weighted), with 0-based node indices. Blank lines and anything after `#`
//! are ignored. An optional `n <count>` line fixes the node count; otherwise it
//! is one more than the largest index seen. Undirected files list each edge
//! once.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dense::DenseMatrix;
use crate::error::{invalid, EcvError, Result};
use crate::linalg::LinearOperator;
use crate::sparse::{CsrMatrix, Duplicates};

/// Sparse, optionally weighted and directed network without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    directed: bool,
    weighted: bool,
    csr: CsrMatrix,
}

impl AdjacencyMatrix {
    /// Builds a network from an edge list. For undirected networks each
    /// `(i, j, w)` also inserts `(j, i, w)`. Repeated pairs are summed when
    /// `weighted`, rejected otherwise. Zero weights are skipped.
    pub fn from_edges(
        n: usize,
        directed: bool,
        weighted: bool,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut triplets = Vec::new();
        for (i, j, w) in edges {
            check_edge(n, i, j, w, weighted)?;
            if w == 0.0 {
                continue;
            }
            triplets.push((i, j, w));
            if !directed {
                triplets.push((j, i, w));
            }
        }
        let duplicates = if weighted {
            Duplicates::Sum
        } else {
            Duplicates::Reject
        };
        let csr = CsrMatrix::from_triplets(n, n, triplets, duplicates)?;
        Ok(Self {
            directed,
            weighted,
            csr,
        })
    }

    /// Wraps a CSR matrix that already satisfies the invariants.
    pub(crate) fn from_csr_unchecked(csr: CsrMatrix, directed: bool, weighted: bool) -> Self {
        debug_assert_eq!(csr.rows(), csr.cols());
        debug_assert!(csr.iter().all(|(i, j, w)| i != j && w > 0.0));
        Self {
            directed,
            weighted,
            csr,
        }
    }

    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            directed,
            weighted: false,
            csr: CsrMatrix::empty(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.csr.rows()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    /// Number of stored (ordered) entries.
    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    /// Neighbors of `i` (out-neighbors if directed) with weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.csr.row(i)
    }

    /// Each edge once: `i < j` for undirected networks, every entry otherwise.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let directed = self.directed;
        self.csr.iter().filter(move |&(i, j, _)| directed || i < j)
    }

    pub fn edge_count(&self) -> usize {
        if self.directed {
            self.nnz()
        } else {
            self.nnz() / 2
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Row sums of the weights (out-degrees when directed).
    pub fn degrees(&self) -> Vec<f64> {
        self.csr.row_sums()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.degrees().iter().sum::<f64>() / self.n() as f64
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.csr.to_dense()
    }

    /// `D^{-1/2} A D^{-1/2}`; isolated nodes get zero rows and columns.
    pub fn normalized_laplacian(&self) -> Result<DenseMatrix> {
        self.require_undirected("normalized Laplacian")?;
        let scale = inverse_sqrt(&self.degrees());
        let mut out = DenseMatrix::zeros(self.n(), self.n());
        for (i, j, w) in self.csr.iter() {
            out.set(i, j, scale[i] * w * scale[j]);
        }
        Ok(out)
    }

    /// `A + tau * (dbar / n) 11^T` with `dbar` the mean degree, as a dense
    /// matrix. The diagonal receives the shift too.
    pub fn regularize(&self, tau: f64) -> Result<DenseMatrix> {
        self.require_undirected("regularization")?;
        check_tau(tau)?;
        let n = self.n();
        let shift = if n == 0 {
            0.0
        } else {
            tau * self.mean_degree() / n as f64
        };
        let mut out = DenseMatrix::from_fn(n, n, |_, _| shift);
        for (i, j, w) in self.csr.iter() {
            out.set(i, j, w + shift);
        }
        Ok(out)
    }

    /// Matrix-free normalized Laplacian of `regularize(tau)`.
    pub fn regularized_laplacian(&self, tau: f64) -> Result<RegularizedLaplacian<'_>> {
        self.require_undirected("regularization")?;
        check_tau(tau)?;
        let n = self.n();
        let shift = if n == 0 {
            0.0
        } else {
            tau * self.mean_degree() / n as f64
        };
        let degrees: Vec<f64> = self
            .degrees()
            .into_iter()
            .map(|d| d + shift * n as f64)
            .collect();
        Ok(RegularizedLaplacian {
            adjacency: &self.csr,
            shift,
            scale: inverse_sqrt(&degrees),
        })
    }

    /// Repeatedly drops nodes whose total incident weight is below `threshold`
    /// until nothing changes; returns the induced subgraph.
    pub fn extract_core(&self, threshold: f64) -> Result<CoreExtraction> {
        self.require_undirected("core extraction")?;
        let n = self.n();
        let mut alive = vec![true; n];
        loop {
            let mut removed = false;
            for i in 0..n {
                if !alive[i] {
                    continue;
                }
                let strength: f64 = self
                    .csr
                    .row(i)
                    .filter(|&(j, _)| alive[j])
                    .map(|(_, w)| w)
                    .sum();
                if strength < threshold {
                    alive[i] = false;
                    removed = true;
                }
            }
            if !removed {
                break;
            }
        }

        let mut old_to_new = vec![None; n];
        let mut new_to_old = Vec::new();
        for i in (0..n).filter(|&i| alive[i]) {
            old_to_new[i] = Some(new_to_old.len());
            new_to_old.push(i);
        }
        let rows = new_to_old
            .iter()
            .map(|&i| {
                self.csr
                    .row(i)
                    .filter_map(|(j, w)| old_to_new[j].map(|nj| (nj, w)))
                    .collect()
            })
            .collect();
        let csr = CsrMatrix::from_sorted_rows(new_to_old.len(), rows);
        Ok(CoreExtraction {
            graph: Self::from_csr_unchecked(csr, false, self.weighted),
            old_to_new,
            new_to_old,
        })
    }

    /// Reads the edge-list format described in the module docs.
    pub fn load_edge_list(path: impl AsRef<Path>, directed: bool, weighted: bool) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_edge_list(BufReader::new(file), directed, weighted)
    }

    pub fn read_edge_list(reader: impl BufRead, directed: bool, weighted: bool) -> Result<Self> {
        let mut declared_n: Option<usize> = None;
        let mut edges = Vec::new();
        let mut lines_of = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parse_err = |message: String| EcvError::Parse {
                line: lineno,
                message,
            };
            if fields[0] == "n" {
                if fields.len() != 2 || declared_n.is_some() {
                    return Err(parse_err("expected a single header `n <count>`".into()));
                }
                declared_n = Some(
                    fields[1]
                        .parse()
                        .map_err(|_| parse_err(format!("bad node count `{}`", fields[1])))?,
                );
                continue;
            }
            if fields.len() != 2 && fields.len() != 3 {
                return Err(parse_err(format!("expected `i j [w]`, got `{content}`")));
            }
            let node = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(format!("bad node index `{s}`")))
            };
            let i = node(fields[0])?;
            let j = node(fields[1])?;
            let w = match fields.get(2) {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad weight `{s}`")))?,
                None => 1.0,
            };
            if i == j {
                return Err(parse_err(format!("self-loop at node {i}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(parse_err(format!(
                    "weight must be finite and non-negative, got {w}"
                )));
            }
            if !weighted && w != 0.0 && w != 1.0 {
                return Err(parse_err(format!("binary edge list has weight {w}")));
            }
            edges.push((i, j, w));
            lines_of.push(lineno);
        }

        let max_index = edges
            .iter()
            .map(|&(i, j, _)| i.max(j) + 1)
            .max()
            .unwrap_or(0);
        let n = match declared_n {
            Some(n) => {
                if let Some(pos) = edges.iter().position(|&(i, j, _)| i >= n || j >= n) {
                    return Err(EcvError::Parse {
                        line: lines_of[pos],
                        message: format!("node index out of range for n = {n}"),
                    });
                }
                n
            }
            None => max_index,
        };
        Self::from_edges(n, directed, weighted, edges)
    }

    /// Writes the edge-list format; the output reloads to the same matrix.
    pub fn write_edge_list(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "n {}", self.n())?;
        for (i, j, w) in self.edges() {
            if self.weighted {
                writeln!(out, "{i} {j} {w}")?;
            } else {
                writeln!(out, "{i} {j}")?;
            }
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_edge_list(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn require_undirected(&self, what: &str) -> Result<()> {
        if self.directed {
            return Err(EcvError::Unsupported(format!(
                "{what} needs an undirected network"
            )));
        }
        Ok(())
    }
}

impl LinearOperator for AdjacencyMatrix {
    fn nrows(&self) -> usize {
        self.n()
    }

    fn ncols(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.csr.apply(x)
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.directed {
            self.csr.apply_transpose(x)
        } else {
            self.csr.apply(x)
        }
    }

    fn all_finite(&self) -> bool {
        true
    }
}

/// Result of [`AdjacencyMatrix::extract_core`].
#[derive(Debug, Clone)]
pub struct CoreExtraction {
    pub graph: AdjacencyMatrix,
    /// New index of each original node, `None` if removed.
    pub old_to_new: Vec<Option<usize>>,
    /// Original index of each surviving node.
    pub new_to_old: Vec<usize>,
}

/// Symmetric operator `D^{-1/2} (A + c 11^T) D^{-1/2}` with `D` the row sums
/// of the shifted matrix.
pub struct RegularizedLaplacian<'a> {
    adjacency: &'a CsrMatrix,
    shift: f64,
    scale: Vec<f64>,
}

impl LinearOperator for RegularizedLaplacian<'_> {
    fn nrows(&self) -> usize {
        self.scale.len()
    }

    fn ncols(&self) -> usize {
        self.scale.len()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = x.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let mut y = self.adjacency.apply(&scaled);
        for c in 0..y.ncols() {
            let total = scaled.column(c).sum() * self.shift;
            for i in 0..y.nrows() {
                y[(i, c)] = self.scale[i] * (y[(i, c)] + total);
            }
        }
        y
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply(x)
    }

    fn all_finite(&self) -> bool {
        self.shift.is_finite()
    }
}

/// `D^{-1/2} W D^{-1/2}` for a dense non-negative square matrix, with `D` its
/// row sums. Rows with non-positive sums are zeroed.
pub fn normalized_laplacian_dense(w: &DenseMatrix) -> Result<DenseMatrix> {
    if !w.is_square() {
        return Err(EcvError::DimensionMismatch(
            "Laplacian of a non-square matrix".into(),
        ));
    }
    let scale = inverse_sqrt(&w.row_sums());
    Ok(DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| {
        scale[i] * w.get(i, j) * scale[j]
    }))
}

/// Dense `W + tau * (dbar / n) 11^T`, `dbar` the mean row sum of `W`.
pub fn regularize_dense(w: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    check_tau(tau)?;
    let n = w.rows();
    if n == 0 {
        return Ok(w.clone());
    }
    let dbar = w.row_sums().iter().sum::<f64>() / n as f64;
    let shift = tau * dbar / n as f64;
    Ok(w.map(|v| v + shift))
}

fn inverse_sqrt(degrees: &[f64]) -> Vec<f64> {
    degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(invalid(format!("tau must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

fn check_edge(n: usize, i: usize, j: usize, w: f64, weighted: bool) -> Result<()> {
    if i >= n || j >= n {
        return Err(EcvError::DimensionMismatch(format!(
            "edge ({i}, {j}) with n = {n}"
        )));
    }
    if i == j {
        return Err(invalid(format!("self-loop at node {i}")));
    }
    if !w.is_finite() || w < 0.0 {
        return Err(invalid(format!(
            "weight must be finite and non-negative, got {w}"
        )));
    }
    if !weighted && w != 0.0 && w != 1.0 {
        return Err(invalid(format!("binary network with weight {w}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn undirected(n: usize, edges: &[(usize, usize)]) -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(n, false, false, edges.iter().map(|&(i, j)| (i, j, 1.0)))
            .unwrap()
    }

    fn parse(text: &str, directed: bool, weighted: bool) -> Result<AdjacencyMatrix> {
        AdjacencyMatrix::read_edge_list(text.as_bytes(), directed, weighted)
    }

    #[test]
    fn parses_binary_undirected() {
        let a = parse("0 1\n1 2", false, false).unwrap();
        assert_eq!(a.n(), 3);
        let entries: Vec<_> = a.csr().iter().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(entries, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn parses_weighted_symmetric() {
        let a = parse("0 1 2.5", false, true).unwrap();
        assert_eq!(a.get(0, 1), 2.5);
        assert_eq!(a.get(1, 0), 2.5);
        assert!(a.is_weighted());
    }

    #[test]
    fn rejects_self_loop_with_line_number() {
        match parse("# comment\n0 0", false, false) {
            Err(EcvError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("self-loop"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_and_negative() {
        assert!(matches!(
            parse("0 1\n0 x", false, false),
            Err(EcvError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("0 1 -1", false, true),
            Err(EcvError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("0 1 2 3", false, true),
            Err(EcvError::Parse { .. })
        ));
        assert!(matches!(
            parse("0 1 2", false, false),
            Err(EcvError::Parse { .. })
        ));
    }

    #[test]
    fn duplicates_sum_when_weighted_and_fail_when_binary() {
        let a = parse("0 1 1.5\n1 0 2", false, true).unwrap();
        assert_eq!(a.get(0, 1), 3.5);
        assert!(parse("0 1\n0 1", false, false).is_err());
        assert!(parse("0 1\n1 0", true, false).is_ok());
    }

    #[test]
    fn header_sets_node_count() {
        let a = parse("n 5\n0 1 # trailing comment\n", false, false).unwrap();
        assert_eq!(a.n(), 5);
        assert!(parse("n 2\n0 3", false, false).is_err());
    }

    #[test]
    fn degree_examples() {
        assert_eq!(AdjacencyMatrix::empty(3, false).degrees(), vec![0.0; 3]);
        assert_eq!(
            undirected(3, &[(0, 1), (1, 2), (0, 2)]).degrees(),
            vec![2.0; 3]
        );
        assert_eq!(
            undirected(3, &[(0, 1), (1, 2)]).degrees(),
            vec![1.0, 2.0, 1.0]
        );
        let directed =
            AdjacencyMatrix::from_edges(3, true, false, [(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(directed.degrees(), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn laplacian_examples() {
        let l = undirected(2, &[(0, 1)]).normalized_laplacian().unwrap();
        assert_eq!(l.as_slice(), &[0.0, 1.0, 1.0, 0.0]);

        let l = undirected(3, &[(0, 1), (1, 2), (0, 2)])
            .normalized_laplacian()
            .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert!((l.get(i, j) - expected).abs() < 1e-15);
            }
        }

        let l = undirected(3, &[(0, 1)]).normalized_laplacian().unwrap();
        assert!((0..3).all(|k| l.get(2, k) == 0.0 && l.get(k, 2) == 0.0));

        let directed = AdjacencyMatrix::from_edges(2, true, false, [(0, 1, 1.0)]).unwrap();
        assert!(directed.normalized_laplacian().is_err());
    }

    #[test]
    fn regularize_examples() {
        let a = undirected(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(a.regularize(0.0).unwrap(), a.to_dense());
        let r = a.regularize(0.5).unwrap();
        let dense = a.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((r.get(i, j) - dense.get(i, j) - 0.25).abs() < 1e-15);
            }
        }
        let empty = AdjacencyMatrix::empty(3, false).regularize(2.0).unwrap();
        assert!(empty.as_slice().iter().all(|&v| v == 0.0));
        assert!(a.regularize(-1.0).is_err());
    }

    #[test]
    fn regularized_laplacian_operator_matches_dense() {
        let a = undirected(5, &[(0, 1), (1, 2), (2, 3), (0, 2)]);
        let dense = normalized_laplacian_dense(&a.regularize(0.7).unwrap()).unwrap();
        let op = a.regularized_laplacian(0.7).unwrap();
        let x = DMatrix::from_fn(5, 2, |i, c| (i as f64 + 1.0) * (c as f64 - 0.5));
        let diff = op.apply(&x) - dense.apply(&x);
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn core_examples() {
        let triangle = undirected(3, &[(0, 1), (1, 2), (0, 2)]);
        let core = triangle.extract_core(2.0).unwrap();
        assert_eq!(core.graph, triangle);
        assert_eq!(core.new_to_old, vec![0, 1, 2]);

        let path = undirected(3, &[(0, 1), (1, 2)]);
        let core = path.extract_core(2.0).unwrap();
        assert_eq!(core.graph.n(), 0);
        assert_eq!(core.old_to_new, vec![None, None, None]);

        assert_eq!(path.extract_core(0.0).unwrap().graph, path);
    }

    #[test]
    fn core_keeps_index_map_consistent() {
        // Triangle 0-1-2 plus pendant 3 attached to 0.
        let g = undirected(4, &[(0, 1), (1, 2), (0, 2), (0, 3)]);
        let core = g.extract_core(2.0).unwrap();
        assert_eq!(core.new_to_old, vec![0, 1, 2]);
        assert_eq!(core.old_to_new, vec![Some(0), Some(1), Some(2), None]);
        assert_eq!(core.graph.edge_count(), 3);
    }

    fn random_graph(seed: u64, n: usize, density: f64, weighted: bool) -> AdjacencyMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < density {
                    let w = if weighted {
                        rng.gen_range(0.1..5.0)
                    } else {
                        1.0
                    };
                    edges.push((i, j, w));
                }
            }
        }
        AdjacencyMatrix::from_edges(n, false, weighted, edges).unwrap()
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(seed in 0u64..1000, n in 1usize..30, weighted: bool) {
            let a = random_graph(seed, n, 0.3, weighted);
            let mut buf = Vec::new();
            a.write_edge_list(&mut buf).unwrap();
            let b = AdjacencyMatrix::read_edge_list(buf.as_slice(), false, weighted).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn degree_sum_is_twice_total_weight(seed in 0u64..1000, n in 1usize..30) {
            let a = random_graph(seed, n, 0.4, true);
            let sum: f64 = a.degrees().iter().sum();
            prop_assert!((sum - 2.0 * a.total_weight()).abs() < 1e-9 * (1.0 + sum));
        }

        #[test]
        fn laplacian_spectral_radius_at_most_one(seed in 0u64..1000, n in 2usize..25) {
            let a = random_graph(seed, n, 0.3, false);
            let l = a.normalized_laplacian().unwrap().to_nalgebra();
            let eig = nalgebra::SymmetricEigen::new(l);
            let radius = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(radius <= 1.0 + 1e-8);
        }

        #[test]
        fn core_is_a_fixed_point(seed in 0u64..1000, n in 1usize..30, threshold in 0.0f64..8.0) {
            let a = random_graph(seed, n, 0.2, true);
            let once = a.extract_core(threshold).unwrap().graph;
            let twice = once.extract_core(threshold).unwrap().graph;
            prop_assert_eq!(once, twice);
        }
    }
}
