//! Discrete probability measures for numerical integration: univariate
//! Gauss-Christoffel rules, nested Clenshaw-Curtis rules, tensor-product
//! grids, and Monte Carlo rules.
//!
//! Every rule constructed here is a probability measure: weights are
//! nonnegative and sum to one. Lebesgue-normalized weights are never exposed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, tridiagonal_eigen};
use crate::orthopoly::JacobiMatrix;

/// Default cap on tensor-product node counts; override with the
/// `LSDR_NODE_BUDGET` environment variable.
pub const DEFAULT_NODE_BUDGET: u64 = 30_000_000;

/// Node budget in effect: `LSDR_NODE_BUDGET` if set and parseable, else
/// [`DEFAULT_NODE_BUDGET`].
pub fn node_budget() -> u64 {
    std::env::var("LSDR_NODE_BUDGET")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_NODE_BUDGET)
}

/// Supported input measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasureSpec {
    /// Product of uniform distributions over per-dimension intervals.
    UniformBox { bounds: Vec<(f64, f64)> },
    /// Independent standard Gaussians in `dim` dimensions.
    GaussianStandard { dim: usize },
}

impl MeasureSpec {
    pub fn uniform_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("uniform box needs bounds".into()));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if lo >= hi || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::DegenerateInterval { dim: i });
            }
        }
        Ok(MeasureSpec::UniformBox { bounds })
    }

    pub fn gaussian_standard(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(MeasureSpec::GaussianStandard { dim })
    }

    /// Uniform box on `[-sqrt(3), sqrt(3)]^dim`: mean zero, identity
    /// covariance.
    pub fn uniform_standardized(dim: usize) -> Result<Self> {
        let r = 3.0_f64.sqrt();
        Self::uniform_box(vec![(-r, r); dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::UniformBox { bounds } => bounds.len(),
            MeasureSpec::GaussianStandard { dim } => *dim,
        }
    }

    /// The univariate measure along dimension `i`.
    pub fn marginal(&self, i: usize) -> MeasureSpec {
        assert!(i < self.dim());
        match self {
            MeasureSpec::UniformBox { bounds } => MeasureSpec::UniformBox {
                bounds: vec![bounds[i]],
            },
            MeasureSpec::GaussianStandard { .. } => MeasureSpec::GaussianStandard { dim: 1 },
        }
    }
}

/// Provenance tag of a quadrature rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Gauss,
    ClenshawCurtis,
    Tensor,
    MonteCarlo,
    LanczosOutput,
}

/// A discrete probability measure: nodes in `R^dim` with nonnegative weights
/// summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleJson", into = "RuleJson")]
pub struct QuadratureRule {
    dim: usize,
    kind: RuleKind,
    /// Row-major: node `i` occupies `nodes[i*dim..(i+1)*dim]`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Probability normalization tolerance shared by all rule constructors.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

impl QuadratureRule {
    /// Builds a rule, validating the probability-measure invariants.
    pub fn new(dim: usize, kind: RuleKind, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if nodes.len() != weights.len() * dim {
            return Err(Error::LengthMismatch {
                what: "nodes",
                left: nodes.len(),
                right: weights.len() * dim,
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeWeight { index: i, value: w });
            }
        }
        let sum = pairwise_sum(&weights);
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightsNotProbability { sum });
        }
        if kind == RuleKind::Gauss && dim == 1 {
            for i in 1..weights.len() {
                if nodes[i] <= nodes[i - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "gauss nodes must be strictly increasing, node {i} is not"
                    )));
                }
            }
        }
        Ok(QuadratureRule {
            dim,
            kind,
            nodes,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat row-major node storage.
    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    /// Node coordinates of a univariate rule.
    pub fn nodes_1d(&self) -> &[f64] {
        assert_eq!(self.dim, 1, "nodes_1d needs a univariate rule");
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature value of `f` under this rule.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        crate::linalg::pairwise_map_sum(0, self.len(), &|i| self.weights[i] * f(self.node(i)))
    }
}

#[derive(Serialize, Deserialize)]
struct RuleJson {
    dim: usize,
    kind: RuleKind,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl From<QuadratureRule> for RuleJson {
    fn from(r: QuadratureRule) -> Self {
        let nodes = (0..r.len()).map(|i| r.node(i).to_vec()).collect();
        RuleJson {
            dim: r.dim,
            kind: r.kind,
            nodes,
            weights: r.weights,
        }
    }
}

impl TryFrom<RuleJson> for QuadratureRule {
    type Error = Error;
    fn try_from(j: RuleJson) -> Result<Self> {
        let mut flat = Vec::with_capacity(j.nodes.len() * j.dim);
        for (i, row) in j.nodes.iter().enumerate() {
            if row.len() != j.dim {
                return Err(Error::LengthMismatch {
                    what: "node row",
                    left: row.len(),
                    right: j.dim,
                });
            }
            let _ = i;
            flat.extend_from_slice(row);
        }
        QuadratureRule::new(j.dim, j.kind, flat, j.weights)
    }
}

/// Closed-form recurrence coefficients of the polynomials orthonormal with
/// respect to a supported univariate measure: shifted Legendre for uniform
/// intervals, probabilists' Hermite for the standard Gaussian.
pub fn reference_jacobi(measure: &MeasureSpec, k: usize) -> Result<JacobiMatrix> {
    if measure.dim() != 1 {
        return Err(Error::MeasureNotUnivariate { dim: measure.dim() });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    match measure {
        MeasureSpec::UniformBox { bounds } => {
            let (lo, hi) = bounds[0];
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let alpha = vec![mid; k];
            let beta = (1..k)
                .map(|i| {
                    let i = i as f64;
                    half * i / (4.0 * i * i - 1.0).sqrt()
                })
                .collect();
            JacobiMatrix::new(alpha, beta)
        }
        MeasureSpec::GaussianStandard { .. } => {
            let alpha = vec![0.0; k];
            let beta = (1..k).map(|i| (i as f64).sqrt()).collect();
            JacobiMatrix::new(alpha, beta)
        }
    }
}

/// The `k`-point Gauss-Christoffel rule of a supported univariate measure,
/// from the eigendecomposition of its Jacobi matrix: nodes are the
/// eigenvalues, weights the squared first components of the normalized
/// eigenvectors.
pub fn gauss_rule(measure: &MeasureSpec, k: usize) -> Result<QuadratureRule> {
    let jacobi = reference_jacobi(measure, k)?;
    rule_from_jacobi(&jacobi, RuleKind::Gauss)
}

pub(crate) fn rule_from_jacobi(jacobi: &JacobiMatrix, kind: RuleKind) -> Result<QuadratureRule> {
    let eig = tridiagonal_eigen(jacobi.alpha(), jacobi.beta())?;
    let k = jacobi.len();
    let weights: Vec<f64> = (0..k)
        .map(|j| {
            let q = eig.vectors[(0, j)];
            q * q
        })
        .collect();
    QuadratureRule::new(1, kind, eig.values, weights)
}

/// The nested Clenshaw-Curtis rule of order `level` for the uniform
/// probability measure on `[-1, 1]`: one node at level 0, `2^level + 1`
/// nodes otherwise. The node set of each level contains the node set of the
/// previous one exactly (bit-for-bit).
pub fn clenshaw_curtis_rule(level: u32) -> Result<QuadratureRule> {
    if level == 0 {
        return QuadratureRule::new(1, RuleKind::ClenshawCurtis, vec![0.0], vec![1.0]);
    }
    if level > 24 {
        return Err(Error::InvalidArgument(format!(
            "clenshaw-curtis level {level} too large"
        )));
    }
    let n = 1usize << level;

    // Nodes -cos(j*pi/n), ascending; symmetry and the midpoint zero are
    // enforced exactly so that nesting holds bit-for-bit across levels.
    let mut nodes = vec![0.0; n + 1];
    for j in 0..n / 2 {
        nodes[j] = -((j as f64) * std::f64::consts::PI / (n as f64)).cos();
    }
    nodes[n / 2] = 0.0;
    for j in 0..n / 2 {
        nodes[n - j] = -nodes[j];
    }

    // Probability weights by closed-form cosine sums: the exact integral of
    // each Lagrange cardinal function against the uniform measure.
    let mut weights = vec![0.0; n + 1];
    let half = n / 2;
    for j in 0..=half {
        let mut sum = 1.0;
        for kk in 1..=half {
            let b = if kk == half { 1.0 } else { 2.0 };
            let angle = 2.0 * (kk as f64) * (j as f64) * std::f64::consts::PI / (n as f64);
            sum -= b * angle.cos() / ((4 * kk * kk - 1) as f64);
        }
        let c = if j == 0 { 1.0 } else { 2.0 };
        weights[j] = c * sum / (2.0 * n as f64);
        weights[n - j] = weights[j];
    }

    QuadratureRule::new(1, RuleKind::ClenshawCurtis, nodes, weights)
}

/// Number of nodes a tensor product of the given univariate rules would have.
pub fn tensor_node_count(univariate: &[QuadratureRule]) -> u128 {
    univariate.iter().map(|r| r.len() as u128).product()
}

/// Tensor product of univariate rules, guarded by the global node budget.
pub fn tensor_rule(univariate: &[QuadratureRule]) -> Result<QuadratureRule> {
    tensor_rule_with_budget(univariate, node_budget())
}

/// Tensor product with an explicit node budget. The last input rule varies
/// fastest in node ordering (row-major).
pub fn tensor_rule_with_budget(
    univariate: &[QuadratureRule],
    budget: u64,
) -> Result<QuadratureRule> {
    if univariate.is_empty() {
        return Err(Error::InvalidArgument(
            "tensor rule needs at least one factor".into(),
        ));
    }
    for r in univariate {
        if r.dim() != 1 {
            return Err(Error::MeasureNotUnivariate { dim: r.dim() });
        }
    }
    let count = tensor_node_count(univariate);
    if count > budget as u128 {
        return Err(Error::NodeBudgetExceeded {
            requested: count,
            budget,
        });
    }
    let count = count as usize;
    let dim = univariate.len();

    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    let mut index = vec![0usize; dim];
    for _ in 0..count {
        let mut w = 1.0;
        for (d, &i) in index.iter().enumerate() {
            nodes.push(univariate[d].nodes_1d()[i]);
            w *= univariate[d].weights()[i];
        }
        weights.push(w);
        // Odometer increment, last dimension fastest.
        for d in (0..dim).rev() {
            index[d] += 1;
            if index[d] < univariate[d].len() {
                break;
            }
            index[d] = 0;
        }
    }
    QuadratureRule::new(dim, RuleKind::Tensor, nodes, weights)
}

/// `n` i.i.d. draws from the measure with equal weights `1/n`. Deterministic
/// for a fixed seed.
pub fn monte_carlo_rule(measure: &MeasureSpec, n: usize, seed: u64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    let dim = measure.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n * dim);
    for _ in 0..n {
        match measure {
            MeasureSpec::UniformBox { bounds } => {
                for &(lo, hi) in bounds {
                    nodes.push(rng.random_range(lo..hi));
                }
            }
            MeasureSpec::GaussianStandard { .. } => {
                for _ in 0..dim {
                    nodes.push(rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
    }
    let weights = vec![1.0 / n as f64; n];
    QuadratureRule::new(dim, RuleKind::MonteCarlo, nodes, weights)
}

/// Analytic moment `E[y^p]` of the uniform distribution on `[lo, hi]`.
pub fn uniform_moment(lo: f64, hi: f64, p: u32) -> f64 {
    let p1 = (p + 1) as f64;
    (hi.powi(p as i32 + 1) - lo.powi(p as i32 + 1)) / (p1 * (hi - lo))
}

/// Analytic moment `E[y^p]` of the standard Gaussian: zero for odd `p`,
/// `(p-1)!!` for even `p`.
pub fn gaussian_moment(p: u32) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut i = p as i64 - 1;
    while i > 1 {
        m *= i as f64;
        i -= 2;
    }
    m
}
