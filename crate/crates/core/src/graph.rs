//! Weighted directed graphs, Laplacians and connectivity predicates.
//!
//! `weights[(i, j)] = a_ij > 0` means node `i` receives from node `j`, i.e.
//! the graph contains the directed edge `(j, i)`. A zero entry encodes the
//! absence of an edge.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance of [`WeightedDigraph::is_balanced`], in weight units.
pub const BALANCE_TOL: f64 = 1e-9;

/// Anything with a directed adjacency relation over `0..n`.
pub trait Adjacency {
    fn node_count(&self) -> usize;
    /// True if the directed edge `from -> to` is present.
    fn has_edge(&self, from: usize, to: usize) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
    a_max: f64,
}

impl WeightedDigraph {
    /// Edgeless graph on `n` nodes.
    pub fn empty(n: usize, a_max: f64) -> Result<Self> {
        Self::from_weights(DMatrix::zeros(n, n), a_max)
    }

    /// Validates the weight bound `1 <= a_ij <= a_max` on every present
    /// edge, the absence of self-loops and `n >= 2`.
    pub fn from_weights(weights: DMatrix<f64>, a_max: f64) -> Result<Self> {
        let n = weights.nrows();
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        if weights.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "weight matrix is {}x{}, expected square",
                n,
                weights.ncols()
            )));
        }
        if !(a_max >= 1.0) || !a_max.is_finite() {
            return Err(Error::InvalidGraph(format!("a_max = {a_max} must be >= 1")));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if w != 0.0 && !(1.0..=a_max).contains(&w) {
                    return Err(Error::InvalidGraph(format!(
                        "weight {w} on edge ({}, {}) outside [1, {a_max}]",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { weights, a_max })
    }

    /// Builds a graph from `(from, to, weight)` triples with 0-based nodes.
    pub fn from_edges(
        n: usize,
        a_max: f64,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        let mut weights = DMatrix::zeros(n, n);
        for (from, to, w) in edges {
            if from >= n || to >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    from + 1,
                    to + 1
                )));
            }
            weights[(to, from)] = w;
        }
        Self::from_weights(weights, a_max)
    }

    /// Undirected graph with unit weights from a list of node pairs.
    pub fn undirected_unit(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges: Vec<_> = pairs
            .into_iter()
            .flat_map(|(a, b)| [(a, b, 1.0), (b, a, 1.0)])
            .collect();
        Self::from_edges(n, 1.0, edges)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight of the edge `from -> to` (0 if absent).
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[(to, from)]
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn is_edgeless(&self) -> bool {
        self.weights.iter().all(|w| *w == 0.0)
    }

    /// Present edges as `(from, to, weight)`, ordered by receiver then sender.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| {
            (0..n).filter_map(move |j| {
                let w = self.weights[(i, j)];
                (w != 0.0).then_some((j, i, w))
            })
        })
    }

    /// `L = D - A` with `D` the diagonal of in-degrees.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        let (in_deg, _) = self.degrees();
        for (i, d) in in_deg.into_iter().enumerate() {
            l[(i, i)] = d;
        }
        l
    }

    /// `(in_degrees, out_degrees)`.
    pub fn degrees(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let in_deg = (0..n).map(|i| self.weights.row(i).sum()).collect();
        let out_deg = (0..n).map(|j| self.weights.column(j).sum()).collect();
        (in_deg, out_deg)
    }

    pub fn max_in_degree(&self) -> f64 {
        (0..self.n())
            .map(|i| self.weights.row(i).sum())
            .fold(0.0, f64::max)
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        let (in_deg, out_deg) = self.degrees();
        in_deg.iter().zip(&out_deg).all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self)
    }

    /// Gershgorin upper bound on `lambda_max(L + L')`:
    /// `max_i (2 L_ii + sum_{j != i} |L_ji + L_ij|)`.
    pub fn gershgorin_bound(&self) -> f64 {
        let l = self.laplacian();
        let n = self.n();
        (0..n)
            .map(|i| {
                2.0 * l[(i, i)]
                    + (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (l[(j, i)] + l[(i, j)]).abs())
                        .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest eigenvalue of the symmetric part `L + L'`.
    pub fn lambda_max_symmetric(&self) -> f64 {
        let l = self.laplacian();
        let s = &l + l.transpose();
        s.symmetric_eigenvalues().max()
    }

    /// Serializes to the edge-list text form: a header `n a_max`, then one
    /// `j i w` line per edge `(j, i)` with 1-based node indices.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n(), self.a_max);
        for (from, to, w) in self.edges() {
            let _ = writeln!(out, "{} {} {}", from + 1, to + 1, w);
        }
        out
    }

    /// Parses the edge-list text form. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "missing header `n a_max`".into(),
        })?;
        let (n, a_max) = parse_header(hline, header)?;
        let mut edges = Vec::new();
        for (line, body) in lines {
            edges.push(parse_edge_line(line, body, n)?);
        }
        Self::from_edges(n, a_max, edges)
    }
}

fn parse_header(line: usize, body: &str) -> Result<(usize, f64)> {
    let mut it = body.split_whitespace();
    let bad = |m: &str| Error::Parse { line, message: m.into() };
    let n = it
        .next()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| bad("header must start with an integer node count"))?;
    let a_max = it
        .next()
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| bad("header must carry a_max"))?;
    if it.next().is_some() {
        return Err(bad("trailing tokens in header"));
    }
    Ok((n, a_max))
}

fn parse_edge_line(line: usize, body: &str, n: usize) -> Result<(usize, usize, f64)> {
    let bad = |m: String| Error::Parse { line, message: m };
    let toks: Vec<&str> = body.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(bad(format!("expected `j i w`, got {:?}", body)));
    }
    let node = |s: &str| -> Result<usize> {
        let v: usize = s.parse().map_err(|_| bad(format!("bad node index {s:?}")))?;
        if v == 0 || v > n {
            return Err(bad(format!("node {v} outside 1..={n}")));
        }
        Ok(v - 1)
    };
    let from = node(toks[0])?;
    let to = node(toks[1])?;
    let w: f64 = toks[2].parse().map_err(|_| bad(format!("bad weight {:?}", toks[2])))?;
    Ok((from, to, w))
}

impl Adjacency for WeightedDigraph {
    fn node_count(&self) -> usize {
        self.n()
    }

    fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weights[(to, from)] != 0.0
    }
}

/// Union of a window of graphs: presence is OR-ed, weights are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionGraph {
    n: usize,
    total_weight: DMatrix<f64>,
}

impl UnionGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Accumulated weight of the edge `(from, to)` across the window.
    pub fn total_weight(&self, from: usize, to: usize) -> f64 {
        self.total_weight[(to, from)]
    }

    pub fn edge_present(&self, from: usize, to: usize) -> bool {
        self.total_weight[(to, from)] > 0.0
    }

    pub fn is_strongly_connected(&self) -> bool {
        is_strongly_connected(self)
    }
}

impl Adjacency for UnionGraph {
    fn node_count(&self) -> usize {
        self.n
    }

    fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edge_present(from, to)
    }
}

pub fn union<'a, I>(graphs: I) -> Result<UnionGraph>
where
    I: IntoIterator<Item = &'a WeightedDigraph>,
{
    let mut it = graphs.into_iter();
    let first = it.next().ok_or(Error::EmptyUnion)?;
    let n = first.n();
    let mut total = first.weights.clone();
    for g in it {
        if g.n() != n {
            return Err(Error::IncompatibleGraphs { expected: n, found: g.n() });
        }
        total += &g.weights;
    }
    Ok(UnionGraph { n, total_weight: total })
}

/// Forward and backward reachability from node 0.
pub fn is_strongly_connected<G: Adjacency + ?Sized>(g: &G) -> bool {
    let n = g.node_count();
    if n == 0 {
        return false;
    }
    reaches_all(n, |a, b| g.has_edge(a, b)) && reaches_all(n, |a, b| g.has_edge(b, a))
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && edge(u, v) {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalKind {
    /// Undirected complete graph with unit weights.
    CompleteG1,
    /// A single undirected unit edge between nodes 1 and 2.
    PairG2,
}

pub fn canonical_graph(n: usize, kind: CanonicalKind) -> Result<WeightedDigraph> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    match kind {
        CanonicalKind::CompleteG1 => {
            let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
            WeightedDigraph::from_weights(w, 1.0)
        }
        CanonicalKind::PairG2 => WeightedDigraph::undirected_unit(n, [(0, 1)]),
    }
}

pub fn complete_graph(n: usize) -> Result<WeightedDigraph> {
    canonical_graph(n, CanonicalKind::CompleteG1)
}

pub fn pair_graph(n: usize) -> Result<WeightedDigraph> {
    canonical_graph(n, CanonicalKind::PairG2)
}

/// Undirected unit-weight cycle `0 - 1 - ... - (n-1) - 0` (a single edge for n = 2).
pub fn cycle_graph(n: usize) -> Result<WeightedDigraph> {
    WeightedDigraph::undirected_unit(n, cycle_pairs(n))
}

pub(crate) fn cycle_pairs(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|k| (k, (k + 1) % n)).collect(),
    }
}

/// Orthonormal eigenbasis shared by the complete graph and the pair graph.
#[derive(Debug, Clone)]
pub struct Proposition1Basis {
    /// Columns `v_1, ..., v_n`.
    pub p: DMatrix<f64>,
    /// `|| P diag(0, n, ..., n) P' - L_complete ||_F`
    pub residual_complete: f64,
    /// `|| P diag(0, 2, 0, ..., 0) P' - L_pair ||_F`
    pub residual_pair: f64,
}

impl Proposition1Basis {
    /// `max_{i != j} |v_i' v_j|`
    pub fn max_off_diagonal_gram(&self) -> f64 {
        let g = self.p.transpose() * &self.p;
        let n = g.nrows();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(g[(i, j)].abs());
                }
            }
        }
        m
    }
}

/// `v_1 = n^{-1/2} 1`, `v_2 = (1, -1, 0, ...)/sqrt 2` and for `i >= 3`
/// `v_i = (i^2 - i)^{-1/2} (1, ..., 1, 1 - i, 0, ..., 0)` with `i - 1` leading ones.
pub fn proposition1_basis(n: usize) -> Result<Proposition1Basis> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    let mut p = DMatrix::zeros(n, n);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for r in 0..n {
        p[(r, 0)] = inv_sqrt_n;
    }
    p[(0, 1)] = std::f64::consts::FRAC_1_SQRT_2;
    p[(1, 1)] = -std::f64::consts::FRAC_1_SQRT_2;
    for i in 3..=n {
        let scale = 1.0 / ((i * i - i) as f64).sqrt();
        for r in 0..i - 1 {
            p[(r, i - 1)] = scale;
        }
        p[(i - 1, i - 1)] = (1.0 - i as f64) * scale;
    }
    let mut d_complete = DMatrix::zeros(n, n);
    for k in 1..n {
        d_complete[(k, k)] = n as f64;
    }
    let mut d_pair = DMatrix::zeros(n, n);
    d_pair[(1, 1)] = 2.0;
    let l1 = complete_graph(n)?.laplacian();
    let l2 = pair_graph(n)?.laplacian();
    let residual_complete = (&p * d_complete * p.transpose() - l1).norm();
    let residual_pair = (&p * d_pair * p.transpose() - l2).norm();
    Ok(Proposition1Basis { p, residual_complete, residual_pair })
}
