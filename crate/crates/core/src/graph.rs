//! Directed communication graphs and the estimation coupling matrices.
//!
//! Weights follow the receiving-row convention: `weight(i, j) = a_ij > 0`
//! means player `j` transmits to player `i`. All indices are zero-based here;
//! the experiment config uses one-based `[from, to, weight]` triples.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a graph needs at least two players, got {0}")]
    TooFewNodes(usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: usize, to: usize },
    #[error("node index {index} out of range for {n} players")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("edge {from} -> {to} has non-positive weight {weight}")]
    NonpositiveWeight { from: usize, to: usize, weight: f64 },
    #[error("-H is not Hurwitz: smallest real part of spec(H) is {min_real_part:.3e}")]
    NotHurwitz { min_real_part: f64 },
    #[error("Q must be a symmetric positive definite matrix of size {expected}")]
    BadQ { expected: usize },
    #[error("no diagonal certificate: {0}")]
    NoDiagonalCertificate(String),
}

/// A directed edge: `from` transmits to `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Self { from, to, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    weights: DMatrix<f64>,
}

impl DirectedGraph {
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut weights = DMatrix::zeros(n, n);
        let mut seen = HashSet::new();
        for e in edges {
            for index in [e.from, e.to] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange { index, n });
                }
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(GraphError::NonpositiveWeight {
                    from: e.from,
                    to: e.to,
                    weight: e.weight,
                });
            }
            if !seen.insert((e.from, e.to)) {
                return Err(GraphError::DuplicateEdge {
                    from: e.from,
                    to: e.to,
                });
            }
            weights[(e.to, e.from)] = e.weight;
        }
        Ok(Self { weights })
    }

    /// Directed ring `0 -> n-1 -> n-2 -> ... -> 1 -> 0` with unit weights.
    pub fn reverse_ring(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<Edge> = (0..n).map(|i| Edge::new(i, (i + n - 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// `a_ij`: weight with which `i` listens to `j`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.weights[(i, j)] > 0.0 {
                    out.push(Edge::new(j, i, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    fn reaches_all(&self, start: usize, forward: bool) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let w = if forward {
                    self.weights[(v, u)]
                } else {
                    self.weights[(u, v)]
                };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Every node reaches every other node along positive-weight edges.
    pub fn is_strongly_connected(&self) -> bool {
        self.reaches_all(0, true) && self.reaches_all(0, false)
    }

    /// `L = D - A` with `D` the diagonal of in-degrees.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.in_degree(i);
        }
        l
    }
}

/// Laplacian, injection and coupling matrix of the estimate law.
///
/// The estimate stack is row-major over `(i, q)`: player `i`'s estimate of
/// every action coordinate `q` is contiguous. With scalar actions `q = j`
/// and the stack has length `n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub laplacian: DMatrix<f64>,
    /// `H = L ⊗ I + B`.
    pub coupling: DMatrix<f64>,
    /// Diagonal of `B`: entry `(i, q)` is `a_{i, owner(q)}`.
    pub injection: DVector<f64>,
    /// Action dimension of each player.
    pub dims: Vec<usize>,
}

impl CouplingMatrices {
    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn stack_len(&self) -> usize {
        self.coupling.nrows()
    }

    /// `B (1_n ⊗ x)`.
    pub fn injected(&self, x: &[f64]) -> DVector<f64> {
        let d = self.total_dim();
        DVector::from_fn(self.stack_len(), |r, _| self.injection[r] * x[r % d])
    }
}

/// Coupling matrices for scalar actions (one coordinate per player).
pub fn coupling_matrices(g: &DirectedGraph) -> CouplingMatrices {
    coupling_matrices_for_dims(g, &vec![1; g.n()])
}

/// Coupling matrices with the estimate law replicated per action coordinate.
pub fn coupling_matrices_for_dims(g: &DirectedGraph, dims: &[usize]) -> CouplingMatrices {
    let n = g.n();
    assert_eq!(dims.len(), n, "one dimension per player");
    let owner: Vec<usize> = dims
        .iter()
        .enumerate()
        .flat_map(|(j, &d)| std::iter::repeat_n(j, d))
        .collect();
    let d = owner.len();
    let laplacian = g.laplacian();
    let mut coupling = linalg::kron(&laplacian, &DMatrix::identity(d, d));
    let injection = DVector::from_fn(n * d, |r, _| g.weight(r / d, owner[r % d]));
    for r in 0..n * d {
        coupling[(r, r)] += injection[r];
    }
    CouplingMatrices {
        laplacian,
        coupling,
        injection,
        dims: dims.to_vec(),
    }
}

/// Symmetric positive definite pair `(P, Q)` with `HᵀP + PH = Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p_matrix: DMatrix<f64>,
    pub q_matrix: DMatrix<f64>,
    /// Frobenius norm of `HᵀP + PH - Q`.
    pub residual: f64,
}

impl LyapunovCertificate {
    pub fn p_norm(&self) -> f64 {
        linalg::lambda_max_sym(&self.p_matrix)
    }

    pub fn p_min(&self) -> f64 {
        linalg::lambda_min_sym(&self.p_matrix)
    }

    pub fn q_min(&self) -> f64 {
        linalg::lambda_min_sym(&self.q_matrix)
    }

    /// `vᵀ P v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let n = self.p_matrix.nrows();
        assert_eq!(v.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.p_matrix[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }
}

fn check_hurwitz(cm: &CouplingMatrices) -> Result<(), GraphError> {
    let min_real_part = linalg::min_real_eigenvalue(&cm.coupling);
    let scale = cm.coupling.amax().max(1.0);
    if !(min_real_part > 1e-10 * scale) {
        return Err(GraphError::NotHurwitz { min_real_part });
    }
    Ok(())
}

fn residual(cm: &CouplingMatrices, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let h = &cm.coupling;
    (h.transpose() * p + p * h - q).norm()
}

/// Solves `HᵀP + PH = Q` for a general symmetric `P`.
pub fn solve_lyapunov_certificate(
    cm: &CouplingMatrices,
    q_choice: &DMatrix<f64>,
) -> Result<LyapunovCertificate, GraphError> {
    let m = cm.stack_len();
    if q_choice.shape() != (m, m)
        || !linalg::is_symmetric(q_choice, 1e-12)
        || linalg::lambda_min_sym(q_choice) <= 0.0
    {
        return Err(GraphError::BadQ { expected: m });
    }
    check_hurwitz(cm)?;
    let p = linalg::solve_continuous_lyapunov(&cm.coupling, q_choice).ok_or(
        GraphError::NotHurwitz {
            min_real_part: linalg::min_real_eigenvalue(&cm.coupling),
        },
    )?;
    let residual = residual(cm, &p, q_choice);
    Ok(LyapunovCertificate {
        p_matrix: p,
        q_matrix: q_choice.clone(),
        residual,
    })
}

/// Diagonal certificate `P = diag{p}`.
///
/// `H` is a nonsingular M-matrix under strong connectivity, so with
/// `u = H⁻¹1 > 0` and `v = H⁻ᵀ1 > 0` the choice `p_k = v_k / u_k` makes
/// `Q = HᵀP + PH` positive definite.
pub fn solve_diagonal_certificate(cm: &CouplingMatrices) -> Result<LyapunovCertificate, GraphError> {
    check_hurwitz(cm)?;
    let m = cm.stack_len();
    let ones = DVector::from_element(m, 1.0);
    let h = &cm.coupling;
    let u = linalg::solve_linear(h, &ones)
        .ok_or_else(|| GraphError::NoDiagonalCertificate("H is singular".into()))?;
    let v = linalg::solve_linear(&h.transpose(), &ones)
        .ok_or_else(|| GraphError::NoDiagonalCertificate("H is singular".into()))?;
    if u.iter().chain(v.iter()).any(|c| *c <= 0.0) {
        return Err(GraphError::NoDiagonalCertificate(
            "H⁻¹1 or H⁻ᵀ1 has a non-positive entry".into(),
        ));
    }
    let p = DMatrix::from_diagonal(&DVector::from_fn(m, |k, _| v[k] / u[k]));
    let q = linalg::symmetric_part(&(h.transpose() * &p + &p * h)) * 1.0;
    if linalg::lambda_min_sym(&q) <= 0.0 {
        return Err(GraphError::NoDiagonalCertificate(
            "resulting Q is not positive definite".into(),
        ));
    }
    let residual = residual(cm, &p, &q);
    Ok(LyapunovCertificate {
        p_matrix: p,
        q_matrix: q,
        residual,
    })
}
