//! Sufficient-dimension-reduction estimators.
//!
//! Two families estimate the same pair of output-space integrals. The
//! slice-based estimators (SIR, SAVE) bin sampled responses into
//! equal-count slices, a Riemann-sum approximation with first-order
//! accuracy in the slice count. The Lanczos-Stieltjes estimators (LSIR,
//! LSAVE) replace slicing with orthonormal polynomials and Gauss-Christoffel
//! quadrature on the output space, pushing the approximation burden onto the
//! input-space rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{composite_factorization, LanczosFactorization};
use crate::linalg::{pairwise_dot, pairwise_map_sum, symmetric_eigen, Mat};
use crate::models::Model;
use crate::quadrature::QuadratureRule;

/// Which estimator produced a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "SIR")]
    Sir,
    #[serde(rename = "SAVE")]
    Save,
    #[serde(rename = "LSIR")]
    Lsir,
    #[serde(rename = "LSAVE")]
    Lsave,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Estimator::Sir => "SIR",
            Estimator::Save => "SAVE",
            Estimator::Lsir => "LSIR",
            Estimator::Lsave => "LSAVE",
        };
        f.write_str(s)
    }
}

/// Provenance of an estimate: sample or node count, slice count or Lanczos
/// order, and a description of the rule or sampling seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdrParams {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub source: String,
}

/// Symmetric positive-semidefinite estimate of one of the inverse-regression
/// matrices. Symmetrized on construction; symmetry and PSD-ness are enforced
/// by assertion because violations indicate implementation bugs, not data
/// problems.
#[derive(Clone, Debug)]
pub struct SdrMatrix {
    matrix: Mat,
    estimator: Estimator,
    params: SdrParams,
}

/// PSD tolerance: smallest eigenvalue must be at least `-PSD_TOL * largest`.
pub const PSD_TOL: f64 = 1e-10;

impl SdrMatrix {
    pub fn new(raw: Mat, estimator: Estimator, params: SdrParams) -> SdrMatrix {
        assert_eq!(raw.rows(), raw.cols(), "SDR matrix must be square");
        assert!(
            raw.max_asymmetry() <= 1e-12 * raw.max_abs().max(1e-300),
            "{estimator} produced an asymmetric matrix (defect {})",
            raw.max_asymmetry()
        );
        let matrix = raw.symmetrized();
        let eig = symmetric_eigen(&matrix).expect("eigendecomposition of a small SDR matrix");
        let max = eig
            .values
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
            .max(1e-300);
        let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            min >= -PSD_TOL * max,
            "{estimator} estimate is not PSD: min eigenvalue {min}, max {max}"
        );
        SdrMatrix {
            matrix,
            estimator,
            params,
        }
    }

    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn params(&self) -> &SdrParams {
        &self.params
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v = symmetric_eigen(&self.matrix)
            .expect("eigendecomposition of a small SDR matrix")
            .values;
        v.reverse();
        v
    }

    /// Number of eigenvalues above `1e-10` of the largest.
    pub fn numerical_rank(&self) -> usize {
        let eig = self.eigenvalues();
        let max = eig.first().copied().unwrap_or(0.0).max(1e-300);
        eig.iter().filter(|&&v| v > 1e-10 * max).count()
    }

    /// JSON form `{estimator, params, m, matrix}` with the matrix row-major.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "estimator": self.estimator,
            "params": self.params,
            "m": self.m(),
            "matrix": self.matrix.data(),
        })
    }
}

/// Partition of sampled responses into equal-count slices.
#[derive(Clone, Debug)]
pub struct SlicePartition {
    boundaries: Vec<f64>,
    assignments: Vec<usize>,
    counts: Vec<usize>,
}

impl SlicePartition {
    /// The `R - 1` response thresholds between slices.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Slice index of each sample, in input order.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_slices(&self) -> usize {
        self.counts.len()
    }

    /// Sample indices of each slice, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_slices()];
        for (i, &s) in self.assignments.iter().enumerate() {
            out[s].push(i);
        }
        out
    }
}

/// Splits responses into `r` slices of as-equal-as-possible counts based on
/// order statistics. Ties go to the lower slice (stable sort by value, then
/// original index). A constant response vector cannot be sliced and is
/// rejected.
pub fn slice_equal_count(responses: &[f64], r: usize) -> Result<SlicePartition> {
    let n = responses.len();
    if r < 2 {
        return Err(Error::InvalidArgument("need at least 2 slices".into()));
    }
    if r > n {
        return Err(Error::RExceedsSamples { r, n });
    }
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("responses must be finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        responses[a]
            .partial_cmp(&responses[b])
            .expect("finite responses")
            .then(a.cmp(&b))
    });
    if responses[order[0]] == responses[order[n - 1]] {
        return Err(Error::DegenerateResponse);
    }

    let base = n / r;
    let rem = n % r;
    let mut assignments = vec![0usize; n];
    let mut counts = Vec::with_capacity(r);
    let mut boundaries = Vec::with_capacity(r - 1);
    let mut pos = 0usize;
    for s in 0..r {
        let take = base + usize::from(s < rem);
        if s > 0 {
            boundaries.push(responses[order[pos]]);
        }
        for &idx in &order[pos..pos + take] {
            assignments[idx] = s;
        }
        counts.push(take);
        pos += take;
    }
    Ok(SlicePartition {
        boundaries,
        assignments,
        counts,
    })
}

fn check_sample_shapes(x: &Mat, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "responses",
            left: y.len(),
            right: x.rows(),
        });
    }
    Ok(())
}

/// Loose standardization check on sampled predictors; a violation is worth a
/// warning but the estimate still goes through.
fn warn_if_not_standardized(x: &Mat) {
    let n = x.rows();
    let m = x.cols();
    if n == 0 {
        return;
    }
    for j in 0..m {
        let mean = pairwise_map_sum(0, n, &|i| x[(i, j)]) / n as f64;
        let var = pairwise_map_sum(0, n, &|i| {
            let d = x[(i, j)] - mean;
            d * d
        }) / n as f64;
        if mean.abs() > 0.1 || (var - 1.0).abs() > 0.2 {
            log::warn!(
                "predictors look non-standardized: column {j} has mean {mean:.3}, variance {var:.3}"
            );
            return;
        }
    }
}

fn slice_column_mean(x: &Mat, members: &[usize], j: usize) -> f64 {
    pairwise_map_sum(0, members.len(), &|i| x[(members[i], j)]) / members.len() as f64
}

/// Sliced inverse regression: `C = (1/N) sum_r N_r mu(r) mu(r)ᵀ` with
/// in-slice sample means over an equal-count partition.
pub fn sir(x: &Mat, y: &[f64], r: usize) -> Result<SdrMatrix> {
    check_sample_shapes(x, y)?;
    warn_if_not_standardized(x);
    let part = slice_equal_count(y, r)?;
    let n = x.rows();
    let m = x.cols();
    let mut c = Mat::zeros(m, m);
    for members in part.members() {
        let mu: Vec<f64> = (0..m).map(|j| slice_column_mean(x, &members, j)).collect();
        c.add_scaled_outer(&mu, members.len() as f64 / n as f64);
    }
    Ok(SdrMatrix::new(
        c,
        Estimator::Sir,
        SdrParams {
            n,
            r: Some(r),
            k: None,
            source: "sample".into(),
        },
    ))
}

/// Sliced average variance estimation:
/// `C = (1/N) sum_r N_r (I - Sigma(r))²` with unbiased in-slice sample
/// covariances. Every slice needs at least two samples.
pub fn save(x: &Mat, y: &[f64], r: usize) -> Result<SdrMatrix> {
    check_sample_shapes(x, y)?;
    warn_if_not_standardized(x);
    let part = slice_equal_count(y, r)?;
    let n = x.rows();
    let m = x.cols();
    for (s, &count) in part.counts().iter().enumerate() {
        if count < 2 {
            return Err(Error::SliceTooSmall { slice: s, count });
        }
    }
    let mut c = Mat::zeros(m, m);
    for members in part.members() {
        let count = members.len();
        let mu: Vec<f64> = (0..m).map(|j| slice_column_mean(x, &members, j)).collect();
        let mut sigma = Mat::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = pairwise_map_sum(0, count, &|p| {
                    (x[(members[p], i)] - mu[i]) * (x[(members[p], j)] - mu[j])
                }) / (count - 1) as f64;
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        let diff = Mat::identity(m).sub(&sigma);
        c = c.add(&diff.matmul(&diff).scaled(count as f64 / n as f64));
    }
    Ok(SdrMatrix::new(
        c,
        Estimator::Save,
        SdrParams {
            n,
            r: Some(r),
            k: None,
            source: "sample".into(),
        },
    ))
}

/// Pseudospectral coefficients of the conditional mean and covariance of the
/// inputs given the response, in the output measure's orthonormal basis.
/// `mu[l]` is an `m`-vector, `sigma[l]` an `m x m` symmetric matrix;
/// `sigma` is empty when only the mean pass has run.
#[derive(Clone, Debug)]
pub struct PseudospectralMoments {
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Mat>,
}

fn rule_source(rule: &QuadratureRule) -> String {
    format!("{:?} rule, {} nodes", rule.kind(), rule.len())
}

fn require_standardized(model: &Model) -> Result<()> {
    if !model.standardization_accepted() {
        return Err(Error::NotStandardized {
            model: model.name().to_string(),
        });
    }
    Ok(())
}

/// Coefficients `mu_l[i] = sum_p sqrt(nu_p) x_p[i] V[p,l]` for `l < k_use`.
fn mu_coefficients(
    fact: &LanczosFactorization,
    rule: &QuadratureRule,
    k_use: usize,
) -> Vec<Vec<f64>> {
    let n = rule.len();
    let m = rule.dim();
    let weighted_x: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|p| fact.weights()[p].sqrt() * rule.node(p)[i])
                .collect()
        })
        .collect();
    (0..k_use)
        .into_par_iter()
        .map(|l| {
            (0..m)
                .map(|i| pairwise_dot(&weighted_x[i], fact.v_column(l)))
                .collect()
        })
        .collect()
}

/// Lanczos-Stieltjes inverse regression from an existing factorization,
/// truncating the polynomial expansion at `k_use` terms (capped by the
/// achieved iteration count).
pub fn lsir_truncated(
    fact: &LanczosFactorization,
    input_rule: &QuadratureRule,
    k_use: usize,
) -> Result<(SdrMatrix, PseudospectralMoments)> {
    if k_use == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let k_eff = k_use.min(fact.achieved_k());
    let m = input_rule.dim();
    let mu = mu_coefficients(fact, input_rule, k_eff);
    let mut c = Mat::zeros(m, m);
    for coeff in &mu {
        c.add_scaled_outer(coeff, 1.0);
    }
    let matrix = SdrMatrix::new(
        c,
        Estimator::Lsir,
        SdrParams {
            n: input_rule.len(),
            r: None,
            k: Some(k_eff),
            source: rule_source(input_rule),
        },
    );
    Ok((
        matrix,
        PseudospectralMoments {
            mu,
            sigma: Vec::new(),
        },
    ))
}

/// Lanczos-Stieltjes inverse regression: factorizes the response diagonal
/// over the input rule, then accumulates `C = sum_l mu_l mu_lᵀ`. Returns the
/// moment coefficients and the factorization for reuse.
pub fn lsir(
    model: &Model,
    input_rule: &QuadratureRule,
    k: usize,
) -> Result<(SdrMatrix, PseudospectralMoments, LanczosFactorization)> {
    require_standardized(model)?;
    let fact = composite_factorization(model, input_rule, k)?;
    let (matrix, moments) = lsir_truncated(&fact, input_rule, k)?;
    Ok((matrix, moments, fact))
}

/// LSAVE coefficient and reconstruction passes from an existing
/// factorization, truncated at `k_use` expansion terms.
pub fn lsave_truncated(
    fact: &LanczosFactorization,
    input_rule: &QuadratureRule,
    k_use: usize,
) -> Result<(SdrMatrix, PseudospectralMoments)> {
    if k_use == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let k_eff = k_use.min(fact.achieved_k());
    let n = input_rule.len();
    let m = input_rule.dim();
    let mu = mu_coefficients(fact, input_rule, k_eff);

    // Reconstruct the conditional-mean expansion at every node:
    // mu(f(x_p))[i] = sum_l mu_l[i] V[p,l] / sqrt(nu_p).
    let root_w: Vec<f64> = fact.weights().iter().map(|w| w.sqrt()).collect();
    let mut mu_at_nodes: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    for (l, coeff) in mu.iter().enumerate() {
        let col = fact.v_column(l);
        for (i, acc) in mu_at_nodes.iter_mut().enumerate() {
            let ci = coeff[i];
            for p in 0..n {
                acc[p] += ci * col[p];
            }
        }
    }
    for acc in &mut mu_at_nodes {
        for p in 0..n {
            // Zero-weight atoms never contribute to the coefficient sums;
            // their reconstruction value is irrelevant, so avoid the 0/0.
            if root_w[p] > 0.0 {
                acc[p] /= root_w[p];
            } else {
                acc[p] = 0.0;
            }
        }
    }

    // Residuals and the covariance coefficient pass.
    let residuals: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|p| input_rule.node(p)[i] - mu_at_nodes[i][p])
                .collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let base: Vec<f64> = (0..n)
                .map(|p| root_w[p] * residuals[i][p] * residuals[j][p])
                .collect();
            (0..k_eff)
                .map(|l| pairwise_dot(&base, fact.v_column(l)))
                .collect()
        })
        .collect();
    let mut sigma: Vec<Mat> = (0..k_eff).map(|_| Mat::zeros(m, m)).collect();
    for (pair_idx, &(i, j)) in pairs.iter().enumerate() {
        for (l, s) in sigma.iter_mut().enumerate() {
            let v = per_pair[pair_idx][l];
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }

    // C = I - 2 Sigma_0 + sum_l Sigma_l^2, assembled as the completed
    // square (I - Sigma_0)^2 + sum_{l>=1} Sigma_l^2 so the result is a sum
    // of squares in floating point as well.
    let head = Mat::identity(m).sub(&sigma[0]);
    let mut c = head.matmul(&head);
    for s in &sigma[1..] {
        c = c.add(&s.matmul(s));
    }
    let matrix = SdrMatrix::new(
        c,
        Estimator::Lsave,
        SdrParams {
            n,
            r: None,
            k: Some(k_eff),
            source: rule_source(input_rule),
        },
    );
    Ok((matrix, PseudospectralMoments { mu, sigma }))
}

/// Lanczos-Stieltjes average variance estimation. The model is evaluated
/// exactly once per node: the single factorization feeds both the mean and
/// covariance coefficient passes.
pub fn lsave(
    model: &Model,
    input_rule: &QuadratureRule,
    k: usize,
) -> Result<(SdrMatrix, PseudospectralMoments)> {
    require_standardized(model)?;
    let fact = composite_factorization(model, input_rule, k)?;
    lsave_truncated(&fact, input_rule, k)
}

/// Top-`n` eigenvectors of an SDR matrix by eigenvalue magnitude, as the
/// columns of an `m x n` orthonormal basis. Signs are fixed by making the
/// first non-negligible component of each column positive.
pub fn subspace(c: &SdrMatrix, n: usize) -> Result<Mat> {
    let m = c.m();
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {n} must be in 1..={m}"
        )));
    }
    let eig = symmetric_eigen(c.matrix()).expect("eigendecomposition of a small SDR matrix");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.values[b]
            .abs()
            .partial_cmp(&eig.values[a].abs())
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut basis = Mat::zeros(m, n);
    for (col, &src) in order.iter().take(n).enumerate() {
        let v: Vec<f64> = (0..m).map(|i| eig.vectors[(i, src)]).collect();
        let vmax = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let flip = v
            .iter()
            .find(|x| x.abs() > 1e-12 * vmax.max(1e-300))
            .map_or(1.0, |x| if *x < 0.0 { -1.0 } else { 1.0 });
        for i in 0..m {
            basis[(i, col)] = flip * v[i];
        }
    }
    Ok(basis)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &Mat, b: &Mat) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows() * a.cols(),
            actual: b.rows() * b.cols(),
        });
    }
    Ok(a.sub(b).frobenius_norm())
}

/// Frobenius distance relative to the reference norm.
pub fn relative_error(a: &Mat, reference: &Mat) -> Result<f64> {
    let denom = reference.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(frobenius_distance(a, reference)? / denom)
}

/// Acute angle between the lines spanned by two vectors, in radians.
pub fn principal_angle(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len());
    let nu = pairwise_dot(u, u).sqrt();
    let nv = pairwise_dot(v, v).sqrt();
    let cos = (pairwise_dot(u, v).abs() / (nu * nv)).clamp(0.0, 1.0);
    cos.acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{default_ex2_direction, model_ex1, model_ex2, Model};
    use crate::quadrature::{gauss_rule, monte_carlo_rule, tensor_rule, MeasureSpec};
    use proptest::prelude::*;

    fn gaussian_samples(n: usize, m: usize, seed: u64) -> Mat {
        let rule = monte_carlo_rule(&MeasureSpec::gaussian_standard(m).unwrap(), n, seed).unwrap();
        Mat::from_row_major(n, m, rule.nodes_flat().to_vec())
    }

    fn tensor_gauss(measure: &MeasureSpec, points_per_dim: usize) -> QuadratureRule {
        let per_dim: Vec<_> = (0..measure.dim())
            .map(|i| gauss_rule(&measure.marginal(i), points_per_dim).unwrap())
            .collect();
        tensor_rule(&per_dim).unwrap()
    }

    #[test]
    fn slicing_balances_counts() {
        let responses: Vec<f64> = (0..100).map(|i| (i as f64 * 0.77).sin()).collect();
        let part = slice_equal_count(&responses, 10).unwrap();
        assert_eq!(part.counts(), &[10; 10]);
        assert_eq!(part.boundaries().len(), 9);
    }

    #[test]
    fn slicing_orders_by_response() {
        let responses: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let part = slice_equal_count(&responses, 2).unwrap();
        for i in 0..5 {
            assert_eq!(part.assignments()[i], 0);
            assert_eq!(part.assignments()[i + 5], 1);
        }
    }

    #[test]
    fn slicing_rejects_degenerate_and_oversized() {
        assert!(matches!(
            slice_equal_count(&[3.0; 8], 2),
            Err(Error::DegenerateResponse)
        ));
        assert!(matches!(
            slice_equal_count(&[1.0, 2.0], 3),
            Err(Error::RExceedsSamples { r: 3, n: 2 })
        ));
    }

    #[test]
    fn sir_with_one_sample_per_slice_is_second_moment() {
        let n = 64;
        let x = gaussian_samples(n, 3, 5);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let c = sir(&x, &y, n).unwrap();
        let mut second = Mat::zeros(3, 3);
        for i in 0..n {
            second.add_scaled_outer(x.row(i), 1.0 / n as f64);
        }
        assert!(c.matrix().sub(&second).max_abs() < 1e-12);
    }

    /// Inverse standard normal CDF (Acklam's rational approximation),
    /// accurate to ~1e-9: an independent oracle for slice means of the
    /// Gaussian order statistics.
    fn inv_norm_cdf(p: f64) -> f64 {
        const A: [f64; 6] = [
            -3.969683028665376e+01,
            2.209460984245205e+02,
            -2.759285104469687e+02,
            1.38357751867269e+02,
            -3.066479806614716e+01,
            2.506628277459239e+00,
        ];
        const B: [f64; 5] = [
            -5.447609879822406e+01,
            1.615858368580409e+02,
            -1.556989798598866e+02,
            6.680131188771972e+01,
            -1.328068155288572e+01,
        ];
        const C: [f64; 6] = [
            -7.784894002430293e-03,
            -3.223964580411365e-01,
            -2.400758277161838e+00,
            -2.549732539343734e+00,
            4.374664141464968e+00,
            2.938163982698783e+00,
        ];
        const D: [f64; 4] = [
            7.784695709041462e-03,
            3.224671290700398e-01,
            2.445134137142996e+00,
            3.754408661907416e+00,
        ];
        assert!(p > 0.0 && p < 1.0);
        let p_low = 0.02425;
        if p < p_low {
            let q = (-2.0 * p.ln()).sqrt();
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - p_low {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            -inv_norm_cdf(1.0 - p)
        }
    }

    #[test]
    fn sir_recovers_linear_direction_with_order_statistics_oracle() {
        let n = 200_000;
        let m = 4;
        let r = 20;
        let x = gaussian_samples(n, m, 21);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let c = sir(&x, &y, r).unwrap();

        let basis = subspace(&c, 1).unwrap();
        let top: Vec<f64> = (0..m).map(|i| basis[(i, 0)]).collect();
        let e0 = {
            let mut v = vec![0.0; m];
            v[0] = 1.0;
            v
        };
        assert!(principal_angle(&top, &e0) < 0.05);

        // Closed-form slice means for equal-probability Gaussian slices:
        // mu_r = R * (pdf(z_r) - pdf(z_{r+1})).
        let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut oracle = 0.0;
        for s in 0..r {
            let lo = if s == 0 {
                0.0
            } else {
                pdf(inv_norm_cdf(s as f64 / r as f64))
            };
            let hi = if s == r - 1 {
                0.0
            } else {
                pdf(inv_norm_cdf((s + 1) as f64 / r as f64))
            };
            let mu = r as f64 * (lo - hi);
            oracle += mu * mu / r as f64;
        }
        assert!(
            (c.matrix()[(0, 0)] - oracle).abs() < 0.02,
            "C00 = {} oracle = {oracle}",
            c.matrix()[(0, 0)]
        );
    }

    #[test]
    fn sir_misses_symmetric_ridge() {
        // mu(y) = 0 for y = (a'x)^2, so SIR sees nothing.
        let n = 100_000;
        let m = 4;
        let x = gaussian_samples(n, m, 33);
        let a = [0.5, -0.5, 0.5, 0.5];
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let t: f64 = (0..m).map(|j| a[j] * x[(i, j)]).sum();
                t * t
            })
            .collect();
        let c = sir(&x, &y, 20).unwrap();
        assert!(c.matrix().frobenius_norm() < 0.05);
    }

    #[test]
    fn save_hand_computed_case() {
        // Samples {-2,-1,1,2} with y = x and R = 2: each in-slice variance
        // is 0.5, so C = (1 - 0.5)^2 = 0.25.
        let x = Mat::from_row_major(4, 1, vec![-2.0, -1.0, 1.0, 2.0]);
        let y = vec![-2.0, -1.0, 1.0, 2.0];
        let c = save(&x, &y, 2).unwrap();
        assert!((c.matrix()[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn save_needs_two_samples_per_slice() {
        let x = Mat::from_row_major(3, 1, vec![0.0, 1.0, 2.0]);
        let y = vec![0.0, 1.0, 2.0];
        assert!(matches!(save(&x, &y, 2), Err(Error::SliceTooSmall { .. })));
    }

    #[test]
    fn save_detects_symmetric_ridge_direction() {
        let n = 100_000;
        let m = 4;
        let x = gaussian_samples(n, m, 8);
        let a = [0.5, -0.5, 0.5, 0.5];
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let t: f64 = (0..m).map(|j| a[j] * x[(i, j)]).sum();
                t * t
            })
            .collect();
        let c = save(&x, &y, 20).unwrap();
        let basis = subspace(&c, 1).unwrap();
        let top: Vec<f64> = (0..m).map(|i| basis[(i, 0)]).collect();
        assert!(principal_angle(&top, &a) < 0.05);
        // Asymptotic magnitude is E[(1 - y)^2] = 2 minus a Riemann-sum
        // deficit; just bracket it.
        let eig = c.eigenvalues();
        assert!(eig[0] > 1.0 && eig[0] < 2.1, "lead eigenvalue {}", eig[0]);
    }

    #[test]
    fn save_of_independent_response_is_small() {
        let n = 100_000;
        let m = 4;
        let x = gaussian_samples(n, m, 12);
        // Response carries no information about x.
        let y: Vec<f64> = (0..n).map(|i| (i % 20) as f64).collect();
        let c = save(&x, &y, 20).unwrap();
        assert!(c.matrix().frobenius_norm() < 0.05);
    }

    #[test]
    fn lsir_linear_model_closed_form() {
        // For y = a'x on standard Gaussians, C_IR = a aᵀ / ||a||².
        let a = vec![1.0, -2.0, 0.5];
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        let a_cl = a.clone();
        let model = Model::new(
            "linear",
            MeasureSpec::gaussian_standard(3).unwrap(),
            true,
            move |x: &[f64]| Ok(a_cl.iter().zip(x).map(|(ai, xi)| ai * xi).sum()),
        );
        let rule = tensor_gauss(model.measure(), 5);
        let (c, moments, fact) = lsir(&model, &rule, 4).unwrap();
        assert!(fact.orthogonality_defect() < 1e-10);
        let mut expect = Mat::zeros(3, 3);
        expect.add_scaled_outer(&a, 1.0 / norm2);
        assert!(c.matrix().sub(&expect).max_abs() < 1e-10);
        assert_eq!(c.numerical_rank(), 1);
        // mu_0 is the quadrature mean of x: zero for rules exact on linears.
        let mu0_norm = pairwise_dot(&moments.mu[0], &moments.mu[0]).sqrt();
        assert!(mu0_norm < 1e-8);
    }

    #[test]
    fn lsir_k1_is_mean_outer_product() {
        let model = model_ex2(default_ex2_direction(7, 5)).unwrap();
        let rule = tensor_gauss(model.measure(), 3);
        let (c, _, _) = lsir(&model, &rule, 1).unwrap();
        assert!(c.matrix().max_abs() < 1e-12);
        assert!(c.numerical_rank() <= 1);
    }

    #[test]
    fn lsir_rank_bounded_by_expansion_order() {
        let model = model_ex2(default_ex2_direction(7, 5)).unwrap();
        let rule = tensor_gauss(model.measure(), 5);
        for k in 1..=4usize {
            let (c, _, _) = lsir(&model, &rule, k).unwrap();
            assert!(c.numerical_rank() <= k, "k={k} rank {}", c.numerical_rank());
        }
    }

    #[test]
    fn lsir_requires_standardized_model() {
        let model = model_ex1(
            [0.1, 0.2, -0.3],
            [[0.5, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, -0.1]],
        )
        .unwrap();
        let rule = tensor_gauss(model.measure(), 3);
        assert!(matches!(
            lsir(&model, &rule, 3),
            Err(Error::NotStandardized { .. })
        ));
        let overridden = model.with_standardization_override();
        assert!(lsir(&overridden, &rule, 3).is_ok());
    }

    #[test]
    fn lsave_quadratic_ridge_closed_form() {
        // y = (a'x)^2: the conditional covariance deficit is rank one with
        // E[(1 - s^2)^2] = 2, so C_AVE = 2 a a^T / ||a||^2, while C_IR = 0.
        let a = vec![0.6, -0.3, 0.9];
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        let a_cl = a.clone();
        let model = Model::new(
            "quad-ridge",
            MeasureSpec::gaussian_standard(3).unwrap(),
            true,
            move |x: &[f64]| {
                let t: f64 = a_cl.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                Ok(t * t)
            },
        );
        let rule = tensor_gauss(model.measure(), 6);
        let (c_ave, moments) = lsave(&model, &rule, 4).unwrap();
        let mut expect = Mat::zeros(3, 3);
        expect.add_scaled_outer(&a, 2.0 / norm2);
        assert!(
            c_ave.matrix().sub(&expect).max_abs() < 1e-9,
            "diff {}",
            c_ave.matrix().sub(&expect).max_abs()
        );
        // Sigma_0 should be near the identity for standardized inputs.
        assert!(moments.sigma[0].max_asymmetry() < 1e-12);

        let (c_ir, _, _) = lsir(&model, &rule, 4).unwrap();
        assert!(c_ir.matrix().max_abs() < 1e-10);
    }

    #[test]
    fn lsave_constant_model_vanishes() {
        let model = Model::new(
            "constant",
            MeasureSpec::gaussian_standard(3).unwrap(),
            true,
            |_: &[f64]| Ok(4.2),
        );
        let rule = tensor_gauss(model.measure(), 3);
        let (c, moments) = lsave(&model, &rule, 5).unwrap();
        // Breakdown at k = 1; Sigma_0 is the quadrature covariance, exactly I.
        assert_eq!(moments.sigma.len(), 1);
        assert!(moments.sigma[0].sub(&Mat::identity(3)).max_abs() < 1e-12);
        assert!(c.matrix().max_abs() < 1e-12);
    }

    #[test]
    fn ex2_ridge_is_rank_one_for_both_estimators() {
        let a = default_ex2_direction(17, 5);
        let model = model_ex2(a.clone()).unwrap();
        let rule = tensor_gauss(model.measure(), 9);
        let (c_ir, _, fact) = lsir(&model, &rule, 10).unwrap();
        let (c_ave, _) = lsave_truncated(&fact, &rule, 10).unwrap();
        for (label, c) in [("LSIR", &c_ir), ("LSAVE", &c_ave)] {
            let basis = subspace(c, 1).unwrap();
            let top: Vec<f64> = (0..5).map(|i| basis[(i, 0)]).collect();
            let angle = principal_angle(&top, &a);
            assert!(angle < 5e-3, "{label} angle {angle}");
            let eig = c.eigenvalues();
            assert!(eig[1] / eig[0] < 1e-4, "{label} ratio {}", eig[1] / eig[0]);
        }
        assert!(c_ir.trace() <= 5.0 + 1e-6);
    }

    #[test]
    fn subspace_sign_and_orthonormality() {
        let mut raw = Mat::zeros(3, 3);
        raw.add_scaled_outer(&[-0.8, 0.6, 0.0], 2.0);
        let c = SdrMatrix::new(
            raw,
            Estimator::Lsir,
            SdrParams {
                n: 0,
                r: None,
                k: None,
                source: "test".into(),
            },
        );
        let b = subspace(&c, 1).unwrap();
        // Fixed sign: first non-negligible component positive.
        assert!(b[(0, 0)] > 0.0);
        assert!((b[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((b[(1, 0)] + 0.6).abs() < 1e-12);

        let ident = SdrMatrix::new(
            Mat::identity(3),
            Estimator::Save,
            SdrParams {
                n: 0,
                r: None,
                k: None,
                source: "test".into(),
            },
        );
        let pair = subspace(&ident, 2).unwrap();
        let gram = pair.transpose().matmul(&pair);
        assert!(gram.sub(&Mat::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn frobenius_metrics() {
        let a = Mat::identity(2);
        let zero = Mat::zeros(2, 2);
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        assert!((frobenius_distance(&a, &zero).unwrap() - 2.0_f64.sqrt()).abs() < 1e-15);
        let scaled = a.scaled(1.1);
        assert!((relative_error(&scaled, &a).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            relative_error(&a, &zero),
            Err(Error::ZeroReference)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn slice_partition_invariants(seed in 0u64..500, n in 4usize..200, r in 2usize..12) {
            prop_assume!(r <= n);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let responses: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let part = slice_equal_count(&responses, r).unwrap();
            // Every sample lands in exactly one slice.
            prop_assert_eq!(part.assignments().len(), n);
            let total: usize = part.counts().iter().sum();
            prop_assert_eq!(total, n);
            let max = part.counts().iter().max().unwrap();
            let min = part.counts().iter().min().unwrap();
            prop_assert!(max - min <= 1);
            // Slice labels respect the response ordering.
            for i in 0..n {
                for j in 0..n {
                    if responses[i] < responses[j] {
                        prop_assert!(part.assignments()[i] <= part.assignments()[j]);
                    }
                }
            }
        }
    }
}
