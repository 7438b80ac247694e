//! Joint default probabilities of name pairs and the limits that binary
//! (default) correlations must respect.
//!
//! For marginals `p_i, p_j` and default correlation `rho`, the four pair
//! outcomes are fixed in closed form:
//!
//! ```text
//! P(1,1) = p_i p_j + rho s      P(1,0) = p_i q_j - rho s
//! P(0,1) = q_i p_j - rho s      P(0,0) = q_i q_j + rho s
//! ```
//!
//! with `s = sqrt(p_i q_i p_j q_j)`. Non-negativity of the off-diagonal
//! outcomes caps `rho` from above; the diagonal outcomes give a (negative)
//! floor. The cap is distinct from positive semi-definiteness of the whole
//! matrix, so [`validate_matrix`] reports the two independently.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::CorrelationMatrix;
use crate::model::ReferencePortfolio;

/// Correlation-scale tolerance for bound comparisons and saturation.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Default-indicator correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultCorrelationMatrix(CorrelationMatrix);

impl DefaultCorrelationMatrix {
    pub fn new(matrix: CorrelationMatrix) -> Self {
        Self(matrix)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        CorrelationMatrix::from_rows(rows).map(Self)
    }

    pub fn matrix(&self) -> &CorrelationMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// Probabilities of the four default outcomes of a pair; `p10` is
/// "first name defaults, second survives".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairwiseJointProbs {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl PairwiseJointProbs {
    pub fn min_entry(&self) -> (&'static str, f64) {
        [
            ("0,0", self.p00),
            ("0,1", self.p01),
            ("1,0", self.p10),
            ("1,1", self.p11),
        ]
        .into_iter()
        .fold(("0,0", f64::INFINITY), |acc, e| if e.1 < acc.1 { e } else { acc })
    }

    pub fn is_consistent(&self) -> bool {
        self.min_entry().1 >= 0.0
    }

    pub fn sum(&self) -> f64 {
        self.p00 + self.p01 + self.p10 + self.p11
    }
}

fn non_degenerate(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return Err(Error::DegenerateMarginal { p });
    }
    Ok(p)
}

/// The closed-form pair probabilities, possibly negative.
///
/// Entries within `BOUND_TOLERANCE * s` of zero are set to exactly zero, so a
/// saturated correlation annihilates the corresponding outcome exactly.
pub fn joint_default_probs_unchecked(p_i: f64, p_j: f64, rho: f64) -> Result<PairwiseJointProbs> {
    let p_i = non_degenerate(p_i)?;
    let p_j = non_degenerate(p_j)?;
    if rho.is_nan() {
        return Err(Error::InvalidArgument("correlation is NaN".into()));
    }
    let (q_i, q_j) = (1.0 - p_i, 1.0 - p_j);
    let s = (p_i * q_i * p_j * q_j).sqrt();
    let cov = rho * s;
    let eps = BOUND_TOLERANCE * s;
    let snap = |x: f64| if x.abs() <= eps { 0.0 } else { x };
    let p11 = snap(p_i * p_j + cov);
    let p10 = snap(p_i - p11);
    let p01 = snap(p_j - p11);
    let p00 = snap(1.0 - p_i - p_j + p11);
    Ok(PairwiseJointProbs { p00, p01, p10, p11 })
}

/// Pair probabilities, rejecting correlations that make any outcome negative
/// (beyond the correlation-scale tolerance).
pub fn joint_default_probs(p_i: f64, p_j: f64, rho: f64) -> Result<PairwiseJointProbs> {
    let probs = joint_default_probs_unchecked(p_i, p_j, rho)?;
    let (outcome, value) = probs.min_entry();
    if value < 0.0 {
        return Err(Error::InconsistentCorrelation { rho, outcome, value });
    }
    Ok(probs)
}

/// `min(sqrt(p_i q_j / (q_i p_j)), sqrt(q_i p_j / (p_i q_j)))`.
pub fn correlation_upper_bound(p_i: f64, p_j: f64) -> Result<f64> {
    let p_i = non_degenerate(p_i)?;
    let p_j = non_degenerate(p_j)?;
    let (lo, hi) = if p_i <= p_j { (p_i, p_j) } else { (p_j, p_i) };
    Ok((lo * (1.0 - hi) / ((1.0 - lo) * hi)).sqrt())
}

/// `-min(sqrt(p_i p_j / (q_i q_j)), sqrt(q_i q_j / (p_i p_j)))`.
pub fn correlation_lower_bound(p_i: f64, p_j: f64) -> Result<f64> {
    let p_i = non_degenerate(p_i)?;
    let p_j = non_degenerate(p_j)?;
    let r = (p_i * p_j / ((1.0 - p_i) * (1.0 - p_j))).sqrt();
    Ok(-r.min(1.0 / r))
}

/// The matrix whose every entry sits on the upper bound; for the sorted
/// portfolio entry `(i, j)`, `i < j`, is `sqrt(p_i q_j / (q_i p_j))`.
pub fn saturated_matrix(portfolio: &ReferencePortfolio) -> Result<DefaultCorrelationMatrix> {
    let p = portfolio.default_probs();
    for &x in &p {
        non_degenerate(x)?;
    }
    let n = p.len();
    let mut rows = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (p[i] * (1.0 - p[j]) / ((1.0 - p[i]) * p[j])).sqrt();
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    DefaultCorrelationMatrix::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
    pub bound: f64,
}

/// Findings of [`validate_matrix`]. Indices are 0-based in portfolio order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixValidation {
    /// Pairs above `correlation_upper_bound`.
    pub upper_violations: Vec<BoundViolation>,
    /// Pairs below the non-negativity floor of `P(0,0)`/`P(1,1)`.
    pub lower_violations: Vec<BoundViolation>,
    /// Names with `p` in {0, 1}; their pairs cannot be checked.
    pub degenerate_names: Vec<usize>,
    pub min_eigenvalue: f64,
    pub positive_semidefinite: bool,
}

impl MatrixValidation {
    pub fn bounds_ok(&self) -> bool {
        self.upper_violations.is_empty() && self.lower_violations.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.bounds_ok() && self.positive_semidefinite && self.degenerate_names.is_empty()
    }
}

pub fn validate_matrix(
    portfolio: &ReferencePortfolio,
    matrix: &DefaultCorrelationMatrix,
) -> Result<MatrixValidation> {
    let n = portfolio.len();
    if matrix.dim() != n {
        return Err(Error::InvalidMatrix(format!(
            "matrix is {0}x{0} but the portfolio has {n} names",
            matrix.dim()
        )));
    }
    let p = portfolio.default_probs();
    let degenerate_names: Vec<usize> = (0..n).filter(|&i| non_degenerate(p[i]).is_err()).collect();
    let mut upper_violations = Vec::new();
    let mut lower_violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if degenerate_names.contains(&i) || degenerate_names.contains(&j) {
                continue;
            }
            let rho = matrix.get(i, j);
            let hi = correlation_upper_bound(p[i], p[j])?;
            if rho > hi + BOUND_TOLERANCE {
                upper_violations.push(BoundViolation { i, j, rho, bound: hi });
            }
            let lo = correlation_lower_bound(p[i], p[j])?;
            if rho < lo - BOUND_TOLERANCE {
                lower_violations.push(BoundViolation { i, j, rho, bound: lo });
            }
        }
    }
    let min_eigenvalue = matrix.matrix().min_eigenvalue();
    Ok(MatrixValidation {
        upper_violations,
        lower_violations,
        degenerate_names,
        min_eigenvalue,
        positive_semidefinite: min_eigenvalue >= crate::matrix::PSD_TOLERANCE,
    })
}
