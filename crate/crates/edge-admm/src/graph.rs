//! Communication graphs, edge agreements and the stacked operators built from them.
//!
//! Agents are indexed from 0 in the API. An edge `(i, j)` carries the constraint
//! `A (x_i - x_j) = b`; row `l` of the incidence matrix has `+1` at `i` and `-1` at `j`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest accepted condition number of `A A^T`.
pub const MAX_CONDITION: f64 = 1e12;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Undirected graph with a fixed orientation per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut seen = BTreeSet::new();
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &edges {
            if i >= m || j >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) references an agent outside 0..{m}"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at agent {i}")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) listed twice")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self { m, edges, neighbors })
    }

    /// Same as [`Graph::new`] with 1-based agent ids, as used in scenario files.
    pub fn from_one_based(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if edges.iter().any(|&(i, j)| i == 0 || j == 0) {
            return Err(Error::InvalidGraph("agent ids are 1-based".into()));
        }
        Self::new(m, edges.iter().map(|&(i, j)| (i - 1, j - 1)))
    }

    /// Path `0 - 1 - ... - (m-1)`.
    pub fn path(m: usize) -> Self {
        Self::new(m, (1..m).map(|i| (i - 1, i))).expect("path graph is valid")
    }

    /// Cycle `0 - 1 - ... - (m-1) - 0`. Needs `m >= 3`.
    pub fn ring(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidGraph("a ring needs at least 3 agents".into()));
        }
        Self::new(m, (0..m).map(|i| (i, (i + 1) % m)))
    }

    pub fn agent_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of agent `i` in the order their edges were inserted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return true;
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// One edge's constraint `A (x_i - x_j) = b` with its projector `P` and `b_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAgreement {
    i: usize,
    j: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    p: DMatrix<f64>,
    b_bar: DVector<f64>,
}

impl EdgeAgreement {
    pub fn new(i: usize, j: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (d, n) = a.shape();
        if b.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "edge ({i}, {j}): b has length {} but A has {d} rows",
                b.len()
            )));
        }
        if d == 0 || d > n {
            return Err(Error::DimensionMismatch(format!(
                "edge ({i}, {j}): A is {d}x{n}, need 1 <= rows <= cols"
            )));
        }
        let gram = &a * a.transpose();
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(cond <= MAX_CONDITION) {
            return Err(Error::RankDeficient { i, j, cond });
        }
        let chol = gram.cholesky().ok_or(Error::RankDeficient { i, j, cond })?;
        let p = a.transpose() * chol.solve(&a);
        let p = (&p + p.transpose()) * 0.5;
        let b_bar = a.transpose() * chol.solve(&b);
        Ok(Self { i, j, a, b, p, b_bar })
    }

    /// View of the same constraint from the other end: `A_ji = A_ij`, `b_ji = -b_ij`.
    pub fn reversed(&self) -> Self {
        Self {
            i: self.j,
            j: self.i,
            a: self.a.clone(),
            b: -&self.b,
            p: self.p.clone(),
            b_bar: -&self.b_bar,
        }
    }

    pub fn edge(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    /// Agent dimension `n`.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Number of constraint rows `d`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn b_bar(&self) -> &DVector<f64> {
        &self.b_bar
    }

    /// `A (x_i - x_j) - b`.
    pub fn residual(&self, xi: &DVector<f64>, xj: &DVector<f64>) -> DVector<f64> {
        &self.a * (xi - xj) - &self.b
    }
}

/// Checked constructor that also verifies the agent dimension.
pub fn build_edge_agreement(
    i: usize,
    j: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    n: usize,
) -> Result<EdgeAgreement> {
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "edge ({i}, {j}): A has {} columns, agent dimension is {n}",
            a.ncols()
        )));
    }
    EdgeAgreement::new(i, j, a, b)
}

/// Oriented incidence matrix, `m_bar x m`.
pub fn incidence(graph: &Graph) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(graph.edge_count(), graph.agent_count());
    for (l, &(i, j)) in graph.edges().iter().enumerate() {
        h[(l, i)] = 1.0;
        h[(l, j)] = -1.0;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedOperators {
    pub n: usize,
    pub h: DMatrix<f64>,
    pub h_bar: DMatrix<f64>,
    pub p_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
}

impl StackedOperators {
    pub fn agent_count(&self) -> usize {
        self.h.ncols()
    }

    /// `H_bar^T P_bar H_bar`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.h_bar.transpose() * &self.p_bar * &self.h_bar
    }

    /// `P_bar (H_bar x - b_bar)` for a stacked `x`.
    pub fn projected_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p_bar * (&self.h_bar * x - &self.b_bar)
    }
}

pub fn stack_operators(
    graph: &Graph,
    agreements: &[EdgeAgreement],
    n: usize,
) -> Result<StackedOperators> {
    if agreements.len() != graph.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} agreements for {} edges",
            agreements.len(),
            graph.edge_count()
        )));
    }
    let mb = graph.edge_count();
    let mut p_bar = DMatrix::zeros(mb * n, mb * n);
    let mut b_bar = DVector::zeros(mb * n);
    for (l, (ag, &edge)) in agreements.iter().zip(graph.edges()).enumerate() {
        if ag.edge() != edge {
            return Err(Error::DimensionMismatch(format!(
                "agreement {l} is for edge {:?}, graph edge is {edge:?}",
                ag.edge()
            )));
        }
        if ag.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "agreement {l} has dimension {}, expected {n}",
                ag.dim()
            )));
        }
        p_bar.view_mut((l * n, l * n), (n, n)).copy_from(ag.p());
        b_bar.rows_mut(l * n, n).copy_from(ag.b_bar());
    }
    let h = incidence(graph);
    let h_bar = h.kronecker(&DMatrix::<f64>::identity(n, n));
    Ok(StackedOperators { n, h, h_bar, p_bar, b_bar })
}

/// Outcome of the orientation sign convention check.
#[derive(Debug, Clone, PartialEq)]
pub enum Consistency {
    Ok,
    Violation { edge: (usize, usize), deviation: f64 },
}

impl Consistency {
    pub fn is_ok(&self) -> bool {
        matches!(self, Consistency::Ok)
    }
}

impl fmt::Display for Consistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Consistency::Ok => write!(f, "ok"),
            Consistency::Violation { edge, deviation } => write!(
                f,
                "edge ({}, {}) breaks A_ij = A_ji, b_ij = -b_ji by {deviation:.3e}",
                edge.0 + 1,
                edge.1 + 1
            ),
        }
    }
}

/// Checks every pair of opposite orientations in `agreements` for
/// `A_ij = A_ji` and `b_ij = -b_ji` to 1e-12.
pub fn check_consistency(agreements: &[EdgeAgreement]) -> Consistency {
    for (k, fwd) in agreements.iter().enumerate() {
        let (i, j) = fwd.edge();
        for bwd in &agreements[k + 1..] {
            if bwd.edge() != (j, i) {
                continue;
            }
            let deviation = if fwd.a().shape() != bwd.a().shape() {
                f64::INFINITY
            } else {
                let da = (fwd.a() - bwd.a()).amax();
                let db = (fwd.b() + bwd.b()).amax();
                da.max(db)
            };
            if deviation > 1e-12 {
                return Consistency::Violation { edge: (i, j), deviation };
            }
        }
    }
    Consistency::Ok
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WellConfigured {
    /// `rank(H_bar^T P_bar) == rank(P_bar)`.
    pub literal: bool,
    pub rank_ht_p: usize,
    pub rank_p: usize,
}

pub fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    if mat.is_empty() {
        return 0;
    }
    let sv = mat.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Rank diagnostic for `ker H_bar^T ∩ im P_bar = {0}`. Advisory only.
pub fn check_well_configured(ops: &StackedOperators) -> WellConfigured {
    let rank_ht_p = numerical_rank(&(ops.h_bar.transpose() * &ops.p_bar));
    let rank_p = numerical_rank(&ops.p_bar);
    WellConfigured { literal: rank_ht_p == rank_p, rank_ht_p, rank_p }
}

/// `W1 = sum over edges of ||A_ij (x_i - x_j) - b_ij||^2`.
pub fn edge_residual_w1(x: &[DVector<f64>], agreements: &[EdgeAgreement]) -> f64 {
    agreements
        .iter()
        .map(|ag| {
            let (i, j) = ag.edge();
            ag.residual(&x[i], &x[j]).norm_squared()
        })
        .sum()
}

/// Splits a stacked vector into `m` blocks of length `n`.
pub fn unstack(x: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    (0..x.len() / n).map(|i| x.rows(i * n, n).into_owned()).collect()
}

pub fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn identity_agreement_keeps_b() {
        let ag = EdgeAgreement::new(0, 1, DMatrix::identity(2, 2), v(&[0.0, 3.0])).unwrap();
        assert!((ag.p() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert_eq!(ag.b_bar(), &v(&[0.0, 3.0]));
    }

    #[test]
    fn row_agreement_projects_onto_first_axis() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let ag = EdgeAgreement::new(0, 1, a, v(&[4.0])).unwrap();
        assert_eq!(ag.p(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(ag.b_bar(), &v(&[4.0, 0.0]));
    }

    #[test]
    fn rank_deficient_and_mismatched_inputs_fail() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            EdgeAgreement::new(0, 1, a, v(&[1.0, 1.0])),
            Err(Error::RankDeficient { .. })
        ));
        let a = DMatrix::identity(2, 2);
        assert!(matches!(
            EdgeAgreement::new(0, 1, a.clone(), v(&[1.0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            build_edge_agreement(0, 1, a, v(&[1.0, 1.0]), 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn reversed_view_flips_b() {
        let ag = EdgeAgreement::new(1, 2, DMatrix::identity(2, 2), v(&[-2.6, -1.5])).unwrap();
        let r = ag.reversed();
        assert_eq!(r.edge(), (2, 1));
        assert_eq!(r.b(), &v(&[2.6, 1.5]));
        assert_eq!(r.b_bar(), &v(&[2.6, 1.5]));
        assert!(check_consistency(&[ag, r]).is_ok());
    }

    #[test]
    fn consistency_reports_offending_edge() {
        let fwd = EdgeAgreement::new(0, 1, DMatrix::identity(2, 2), v(&[0.0, 3.0])).unwrap();
        let bad = EdgeAgreement::new(1, 0, DMatrix::identity(2, 2), v(&[0.0, 3.0])).unwrap();
        match check_consistency(&[fwd, bad]) {
            Consistency::Violation { edge, deviation } => {
                assert_eq!(edge, (0, 1));
                assert!((deviation - 6.0).abs() < 1e-12);
            }
            Consistency::Ok => panic!("expected a violation"),
        }
        assert!(check_consistency(&[]).is_ok());
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_one_based(3, &[(0, 1)]).is_err());
        let g = Graph::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.is_connected());
        assert!(!Graph::new(3, [(0, 1)]).unwrap().is_connected());
    }

    #[test]
    fn small_incidence_matrices() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(incidence(&g), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        let h = incidence(&Graph::path(3));
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]));
    }

    #[test]
    fn stacked_projector_is_block_diagonal() {
        let g = Graph::path(3);
        let a1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let a2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let ags = vec![
            EdgeAgreement::new(0, 1, a1, v(&[0.0])).unwrap(),
            EdgeAgreement::new(1, 2, a2, v(&[0.0])).unwrap(),
        ];
        let ops = stack_operators(&g, &ags, 2).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 0)] = 1.0;
        expected[(3, 3)] = 1.0;
        assert_eq!(ops.p_bar, expected);
        assert_eq!(ops.h_bar.shape(), (4, 6));

        let swapped = vec![ags[1].clone(), ags[0].clone()];
        assert!(stack_operators(&g, &swapped, 2).is_err());
        assert!(stack_operators(&g, &ags[..1], 2).is_err());
    }

    #[test]
    fn single_edge_w1() {
        let ag = EdgeAgreement::new(0, 1, DMatrix::identity(2, 2), v(&[0.0, 3.0])).unwrap();
        let x = vec![v(&[0.0, 0.0]), v(&[0.0, 0.0])];
        assert!((edge_residual_w1(&x, &[ag.clone()]) - 9.0).abs() < 1e-15);
        let x = vec![v(&[1.0, 4.0]), v(&[1.0, 1.0])];
        assert_eq!(edge_residual_w1(&x, &[ag]), 0.0);
    }

    #[test]
    fn empty_graph_is_well_configured() {
        let g = Graph::new(3, []).unwrap();
        let ops = stack_operators(&g, &[], 2).unwrap();
        let wc = check_well_configured(&ops);
        assert!(wc.literal);
        assert_eq!(wc.rank_p, 0);
    }

    #[test]
    fn stack_round_trip() {
        let blocks = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        let s = stack(&blocks);
        assert_eq!(unstack(&s, 2), blocks);
    }
}
