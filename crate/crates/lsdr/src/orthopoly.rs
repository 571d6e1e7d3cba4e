//! Orthonormal-polynomial machinery: recurrence coefficients from the
//! discrete Stieltjes procedure, three-term-recurrence evaluation, and
//! pseudospectral expansion coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_map_sum, Mat};
use crate::quadrature::QuadratureRule;

/// Recurrence coefficients of a family of orthonormal polynomials, i.e. a
/// symmetric tridiagonal matrix with diagonal `alpha` and positive
/// off-diagonal `beta`.
///
/// The polynomials satisfy `beta[i+1] * phi[i+1](y) = (y - alpha[i]) * phi[i](y)
/// - beta[i] * phi[i-1](y)` with `phi[0] = 1` for a probability measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JacobiJson", into = "JacobiJson")]
pub struct JacobiMatrix {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl JacobiMatrix {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument(
                "jacobi matrix needs at least one diagonal entry".into(),
            ));
        }
        if beta.len() + 1 != alpha.len() {
            return Err(Error::LengthMismatch {
                what: "beta",
                left: beta.len(),
                right: alpha.len() - 1,
            });
        }
        for (i, &b) in beta.iter().enumerate() {
            if b <= 0.0 || b.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "beta[{i}] = {b} must be positive; truncate at the breakdown point"
                )));
            }
        }
        Ok(JacobiMatrix { alpha, beta })
    }

    /// Number of recurrence coefficients (matrix order).
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Truncates to the leading `k` coefficients.
    pub fn truncated(&self, k: usize) -> JacobiMatrix {
        assert!(k >= 1 && k <= self.len());
        JacobiMatrix {
            alpha: self.alpha[..k].to_vec(),
            beta: self.beta[..k - 1].to_vec(),
        }
    }

    /// Entrywise max-abs difference against another coefficient set of the
    /// same order.
    pub fn max_abs_diff(&self, other: &JacobiMatrix) -> f64 {
        assert_eq!(self.len(), other.len());
        let a = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        let b = self
            .beta
            .iter()
            .zip(&other.beta)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        a.max(b)
    }
}

#[derive(Serialize, Deserialize)]
struct JacobiJson {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl From<JacobiMatrix> for JacobiJson {
    fn from(j: JacobiMatrix) -> Self {
        JacobiJson {
            alpha: j.alpha,
            beta: j.beta,
        }
    }
}

impl TryFrom<JacobiJson> for JacobiMatrix {
    type Error = Error;
    fn try_from(j: JacobiJson) -> Result<Self> {
        JacobiMatrix::new(j.alpha, j.beta)
    }
}

/// Values of the first `k` orthonormal polynomials on a set of points:
/// entry `(i, j)` is the degree-`j` polynomial at point `i`.
#[derive(Clone, Debug)]
pub struct PolynomialTable {
    points: Vec<f64>,
    values: Mat,
}

impl PolynomialTable {
    pub(crate) fn from_parts(points: Vec<f64>, values: Mat) -> Self {
        assert_eq!(points.len(), values.rows());
        PolynomialTable { points, values }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_polynomials(&self) -> usize {
        self.values.cols()
    }

    /// Value of the degree-`j` polynomial at point `i`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// All values of the degree-`j` polynomial, in point order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    /// Largest deviation of `sum_i w_i phi_a(t_i) phi_b(t_i)` from the
    /// Kronecker delta, over all polynomial pairs. Near zero when the table
    /// is evaluated at its defining measure's own atoms.
    pub fn max_orthonormality_defect(&self, weights: &[f64]) -> f64 {
        assert_eq!(weights.len(), self.num_points());
        let k = self.num_polynomials();
        let mut worst = 0.0_f64;
        for a in 0..k {
            for b in a..k {
                let ip = pairwise_map_sum(0, self.num_points(), &|i| {
                    weights[i] * self.values[(i, a)] * self.values[(i, b)]
                });
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// Recurrence coefficients of the polynomials orthonormal with respect to a
/// univariate discrete probability measure, by the Stieltjes procedure.
///
/// The procedure runs in vector form on the measure's atoms, which is the
/// same arithmetic as the Lanczos iteration on the diagonal matrix of atoms
/// with the root-weight starting vector; both entry points share one kernel.
/// If the recurrence breaks down before `k` steps (the measure has fewer
/// distinct atoms), the result is truncated to the achieved order.
pub fn stieltjes_discrete(measure: &QuadratureRule, k: usize) -> Result<JacobiMatrix> {
    if measure.dim() != 1 {
        return Err(Error::MeasureNotUnivariate { dim: measure.dim() });
    }
    let fact = crate::lanczos::lanczos_diagonal(measure.nodes_1d(), measure.weights(), k)?;
    Ok(fact.jacobi().clone())
}

/// Evaluates the orthonormal polynomials defined by `jacobi` at `points` via
/// the forward three-term recurrence, columns `0..k-1`.
pub fn eval_polynomials(jacobi: &JacobiMatrix, points: &[f64]) -> PolynomialTable {
    let k = jacobi.len();
    let n = points.len();
    let mut values = Mat::zeros(n, k);
    for (i, &t) in points.iter().enumerate() {
        let mut prev = 0.0;
        let mut cur = 1.0;
        values[(i, 0)] = cur;
        for j in 1..k {
            let b_j = jacobi.beta()[j - 1];
            let b_prev = if j >= 2 { jacobi.beta()[j - 2] } else { 0.0 };
            let next = ((t - jacobi.alpha()[j - 1]) * cur - b_prev * prev) / b_j;
            values[(i, j)] = next;
            prev = cur;
            cur = next;
        }
    }
    PolynomialTable::from_parts(points.to_vec(), values)
}

/// Pseudospectral coefficients of a function from its values at the rule's
/// nodes: `c[i] = sum_j w_j g_j phi_i(t_j)`.
pub fn pseudospectral_coefficients(
    values_at_nodes: &[f64],
    rule: &QuadratureRule,
    table: &PolynomialTable,
) -> Result<Vec<f64>> {
    if values_at_nodes.len() != rule.len() {
        return Err(Error::LengthMismatch {
            what: "values_at_nodes",
            left: values_at_nodes.len(),
            right: rule.len(),
        });
    }
    if table.num_points() != rule.len() {
        return Err(Error::LengthMismatch {
            what: "polynomial table",
            left: table.num_points(),
            right: rule.len(),
        });
    }
    let w = rule.weights();
    Ok((0..table.num_polynomials())
        .map(|i| {
            pairwise_map_sum(0, rule.len(), &|j| {
                w[j] * values_at_nodes[j] * table.value(j, i)
            })
        })
        .collect())
}
