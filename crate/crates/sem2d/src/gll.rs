//! One-dimensional Gauss-Lobatto-Legendre quadrature and nodal calculus.
//!
//! The (k+1)-point GLL rule on [-1,1] has nodes at +-1 and at the roots of
//! P_k', with weights w_i = 2 / (k(k+1) P_k(x_i)^2). It integrates
//! polynomials of degree <= 2k-1 exactly, which is one degree short of what
//! the Q^k mass matrix would need; accepting that defect is what diagonalizes
//! the mass matrix and produces the nodal superconvergence this crate studies.

/// Largest supported polynomial degree. Newton from Chebyshev-Lobatto
/// starting guesses is verified to converge for every k up to this cap.
pub const MAX_DEGREE: usize = 16;

/// Errors from rule construction.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GllError {
    #[error("polynomial degree must be in 1..={MAX_DEGREE}, got {0}")]
    InvalidDegree(usize),
    #[error("Newton iteration for node {index} of degree {k} did not converge")]
    NewtonDiverged { k: usize, index: usize },
}

/// A (k+1)-point Gauss-Lobatto-Legendre quadrature rule on [-1,1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    /// Polynomial degree k (the rule has k+1 nodes).
    pub k: usize,
    /// Nodes in ascending order; `nodes[0] = -1`, `nodes[k] = 1`, antisymmetric.
    pub nodes: Vec<f64>,
    /// Positive weights, symmetric, summing to 2.
    pub weights: Vec<f64>,
}

/// Reference-element operators derived from a [`QuadRule`].
#[derive(Debug, Clone)]
pub struct RefElement {
    /// The underlying quadrature rule.
    pub rule: QuadRule,
    /// Row-major (k+1) x (k+1) differentiation matrix:
    /// `diff[i][j]` is the derivative of the j-th Lagrange cardinal at node i.
    pub diff: Vec<f64>,
}

impl RefElement {
    /// Number of 1-D nodes, k+1.
    #[inline]
    pub fn np(&self) -> usize {
        self.rule.k + 1
    }

    /// Entry (i, j) of the differentiation matrix.
    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.diff[i * self.np() + j]
    }
}

/// Legendre polynomial P_k and its derivative at `x`, by the standard
/// three-term recurrences (stable on [-1,1] for the degrees supported here).
fn legendre_pair(k: usize, x: f64) -> (f64, f64) {
    match k {
        0 => return (1.0, 0.0),
        1 => return (x, 1.0),
        _ => {}
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for n in 2..=k {
        let nf = n as f64;
        let p_next = ((2.0 * nf - 1.0) * x * p - (nf - 1.0) * p_prev) / nf;
        // P_n' = P_{n-2}' + (2n-1) P_{n-1}
        let d_next = d_prev + (2.0 * nf - 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Build the (k+1)-point GLL rule.
///
/// Interior nodes are located by Newton iteration on P_k' starting from the
/// Chebyshev-Lobatto points -cos(pi j / k); the step uses
/// P_k'' = (2x P_k' - k(k+1) P_k) / (1 - x^2) and is damped to at most 0.2/k
/// so a poor early step cannot leave the bracketing interval. Mirrored roots
/// are averaged afterwards so the node set is exactly antisymmetric.
pub fn gll_rule(k: usize) -> Result<QuadRule, GllError> {
    if k == 0 || k > MAX_DEGREE {
        return Err(GllError::InvalidDegree(k));
    }
    let mut nodes = vec![0.0; k + 1];
    nodes[0] = -1.0;
    nodes[k] = 1.0;
    let kk1 = (k * (k + 1)) as f64;
    let max_step = 0.2 / k as f64;
    for j in 1..k {
        let mut x = -(std::f64::consts::PI * j as f64 / k as f64).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_pair(k, x);
            let ddp = (2.0 * x * dp - kk1 * p) / (1.0 - x * x);
            let step = (dp / ddp).clamp(-max_step, max_step);
            x -= step;
            if step.abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(GllError::NewtonDiverged { k, index: j });
        }
        nodes[j] = x;
    }
    // Symmetrize: average each root with the negation of its mirror.
    for j in 1..k {
        let m = k - j;
        if j < m {
            let s = 0.5 * (nodes[j] - nodes[m]);
            nodes[j] = s;
            nodes[m] = -s;
        } else if j == m {
            nodes[j] = 0.0;
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre_pair(k, x);
            2.0 / (kk1 * p * p)
        })
        .collect();
    Ok(QuadRule { k, nodes, weights })
}

/// Barycentric weights for a node set (the common scale factor is irrelevant).
fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i] /= nodes[i] - nodes[j];
            }
        }
    }
    w
}

/// Nodal differentiation matrix in barycentric form.
///
/// Off-diagonals are `(w_j / w_i) / (x_i - x_j)`; each diagonal entry is the
/// negated sum of its row's off-diagonals, so rows annihilate constants by
/// construction rather than to rounding.
pub fn diff_matrix(rule: &QuadRule) -> RefElement {
    let n = rule.k + 1;
    let bw = barycentric_weights(&rule.nodes);
    let mut diff = vec![0.0; n * n];
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let d = (bw[j] / bw[i]) / (rule.nodes[i] - rule.nodes[j]);
                diff[i * n + j] = d;
                row_sum += d;
            }
        }
        diff[i * n + i] = -row_sum;
    }
    RefElement {
        rule: rule.clone(),
        diff,
    }
}

/// Evaluate the degree-<=k interpolant of `values` (given at the rule's nodes)
/// at `x` in [-1,1], by the barycentric formula.
///
/// Exact at the nodes themselves: a node hit short-circuits to the nodal value
/// instead of dividing by zero.
pub fn interpolate_1d(rule: &QuadRule, values: &[f64], x: f64) -> f64 {
    assert_eq!(values.len(), rule.k + 1, "nodal value count must be k+1");
    let bw = barycentric_weights(&rule.nodes);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xi, &wi), &fi) in rule.nodes.iter().zip(&bw).zip(values) {
        let dx = x - xi;
        if dx == 0.0 {
            return fi;
        }
        let t = wi / dx;
        num += t * fi;
        den += t;
    }
    num / den
}
