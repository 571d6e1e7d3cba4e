//! Lanczos tridiagonalization of a diagonal response matrix with the
//! root-weight starting vector. Applied to responses `f_i` with probability
//! weights `nu_i`, the iteration is the discrete Stieltjes procedure for the
//! pushforward measure on the output space: the tridiagonal coefficients are
//! the Jacobi matrix of that measure and the Lanczos vectors carry the
//! orthonormal polynomials evaluated at the responses.

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_dot, pairwise_sum, Mat};
use crate::models::Model;
use crate::orthopoly::{JacobiMatrix, PolynomialTable};
use crate::quadrature::{QuadratureRule, RuleKind, WEIGHT_SUM_TOL};

/// Result of `k` Lanczos iterations on `diag(response_values)` started from
/// the root-weight vector.
#[derive(Clone, Debug)]
pub struct LanczosFactorization {
    jacobi: JacobiMatrix,
    /// Lanczos vectors, one column of length `n` per achieved iteration.
    v_columns: Vec<Vec<f64>>,
    /// The off-diagonal entry that would start iteration `achieved_k`: the
    /// residual norm after a complete run, or the vanishing norm that
    /// triggered breakdown.
    trailing_beta: f64,
    /// Normalized residual direction when `trailing_beta > 0`.
    residual: Option<Vec<f64>>,
    requested_k: usize,
    response_values: Vec<f64>,
    weights: Vec<f64>,
}

impl LanczosFactorization {
    /// Iterations actually completed; at most the requested `k`, fewer after
    /// breakdown. Downstream consumers must use this, never the request.
    pub fn achieved_k(&self) -> usize {
        self.jacobi.len()
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    /// The tridiagonal recurrence coefficients `T`.
    pub fn jacobi(&self) -> &JacobiMatrix {
        &self.jacobi
    }

    pub fn trailing_beta(&self) -> f64 {
        self.trailing_beta
    }

    pub fn response_values(&self) -> &[f64] {
        &self.response_values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of atoms (rows of `V`).
    pub fn num_atoms(&self) -> usize {
        self.response_values.len()
    }

    /// Entry `(i, j)` of the Lanczos vector matrix `V`.
    pub fn v_entry(&self, i: usize, j: usize) -> f64 {
        self.v_columns[j][i]
    }

    /// Column `j` of `V`.
    pub fn v_column(&self, j: usize) -> &[f64] {
        &self.v_columns[j]
    }

    /// Max-abs entry of `VᵀV - I`. Stays at rounding level thanks to the
    /// full reorthogonalization.
    pub fn orthogonality_defect(&self) -> f64 {
        let k = self.achieved_k();
        let mut worst = 0.0_f64;
        for a in 0..k {
            for b in a..k {
                let ip = pairwise_dot(&self.v_columns[a], &self.v_columns[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Max-abs entry of `A V - V T - beta_k v_k e_kᵀ` with
    /// `A = diag(response_values)`.
    pub fn recurrence_residual(&self) -> f64 {
        let k = self.achieved_k();
        let n = self.num_atoms();
        let alpha = self.jacobi.alpha();
        let beta = self.jacobi.beta();
        let mut worst = 0.0_f64;
        for l in 0..k {
            for i in 0..n {
                let mut r = self.response_values[i] * self.v_columns[l][i]
                    - alpha[l] * self.v_columns[l][i];
                if l > 0 {
                    r -= beta[l - 1] * self.v_columns[l - 1][i];
                }
                if l + 1 < k {
                    r -= beta[l] * self.v_columns[l + 1][i];
                }
                if l + 1 == k {
                    if let Some(res) = &self.residual {
                        r -= self.trailing_beta * res[i];
                    }
                }
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// JSON form: `T` inline, `V` included or omitted via the flag (row-major
    /// nested arrays when present).
    pub fn to_json(&self, include_vectors: bool) -> serde_json::Value {
        let v = if include_vectors {
            let n = self.num_atoms();
            let k = self.achieved_k();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..k).map(|j| self.v_columns[j][i]).collect())
                .collect();
            json!(rows)
        } else {
            serde_json::Value::Null
        };
        json!({
            "t": self.jacobi,
            "trailing_beta": self.trailing_beta,
            "achieved_k": self.achieved_k(),
            "requested_k": self.requested_k,
            "response_values": self.response_values,
            "weights": self.weights,
            "v": v,
        })
    }
}

/// Runs `k` Lanczos iterations on the diagonal matrix of `response_values`
/// with starting vector `sqrt(weights)`, reorthogonalizing fully (two passes
/// against all previous vectors) at every step.
///
/// Breakdown — a candidate norm at or below `1e-12 * max(1, max|f_i|)` —
/// truncates the run; the factorization then reports the achieved iteration
/// count. Repeated response values are fine: the discrete measure merges the
/// atoms implicitly and breakdown caps the usable order.
pub fn lanczos_diagonal(
    response_values: &[f64],
    weights: &[f64],
    k: usize,
) -> Result<LanczosFactorization> {
    let n = response_values.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            what: "weights",
            left: weights.len(),
            right: n,
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KExceedsAtoms { k, atoms: n });
    }
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 || !w.is_finite() {
            return Err(Error::NegativeWeight { index: i, value: w });
        }
    }
    let sum = pairwise_sum(weights);
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightsNotProbability { sum });
    }
    if response_values.iter().any(|f| !f.is_finite()) {
        return Err(Error::InvalidArgument(
            "response values must be finite".into(),
        ));
    }

    let scale = response_values.iter().fold(1.0_f64, |m, f| m.max(f.abs()));
    let tol = 1e-12 * scale;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut alphas: Vec<f64> = Vec::with_capacity(k);
    let mut betas: Vec<f64> = Vec::with_capacity(k.saturating_sub(1));
    let mut candidate: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut trailing = 0.0;
    let mut residual = None;

    for step in 0..k {
        let norm = pairwise_dot(&candidate, &candidate).sqrt();
        if step == 0 {
            // ||sqrt(weights)|| = 1 for a probability vector.
            debug_assert!((norm - 1.0).abs() < 1e-6);
        } else if norm <= tol {
            trailing = norm;
            break;
        } else {
            betas.push(norm);
        }
        let v: Vec<f64> = candidate.iter().map(|x| x / norm).collect();

        let mut next: Vec<f64> = v
            .iter()
            .zip(response_values)
            .map(|(vi, fi)| vi * fi)
            .collect();
        let alpha = pairwise_dot(&next, &v);
        alphas.push(alpha);
        for (x, vi) in next.iter_mut().zip(&v) {
            *x -= alpha * vi;
        }
        if step > 0 {
            let beta = betas[step - 1];
            let prev = &columns[step - 1];
            for (x, pi) in next.iter_mut().zip(prev) {
                *x -= beta * pi;
            }
        }
        columns.push(v);

        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for col in &columns {
                let c = pairwise_dot(&next, col);
                if c != 0.0 {
                    for (x, u) in next.iter_mut().zip(col) {
                        *x -= c * u;
                    }
                }
            }
        }
        candidate = next;

        if step + 1 == k {
            trailing = pairwise_dot(&candidate, &candidate).sqrt();
            if trailing > 0.0 {
                residual = Some(candidate.iter().map(|x| x / trailing).collect());
            }
        }
    }

    Ok(LanczosFactorization {
        jacobi: JacobiMatrix::new(alphas, betas)?,
        v_columns: columns,
        trailing_beta: trailing,
        residual,
        requested_k: k,
        response_values: response_values.to_vec(),
        weights: weights.to_vec(),
    })
}

/// Evaluates the model at every node of the input rule (in parallel, with
/// deterministic assembly order) and tridiagonalizes the resulting diagonal
/// response matrix.
pub fn composite_factorization(
    model: &Model,
    input_rule: &QuadratureRule,
    k: usize,
) -> Result<LanczosFactorization> {
    if model.dim() != input_rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: input_rule.dim(),
        });
    }
    let evals: Vec<std::result::Result<f64, Error>> = (0..input_rule.len())
        .into_par_iter()
        .map(|i| model.eval(input_rule.node(i)))
        .collect();
    let mut responses = Vec::with_capacity(evals.len());
    for (i, r) in evals.into_iter().enumerate() {
        match r {
            Ok(v) => responses.push(v),
            Err(e) => {
                return Err(Error::ModelEvaluation {
                    node: i,
                    message: e.to_string(),
                })
            }
        }
    }
    lanczos_diagonal(&responses, input_rule.weights(), k)
}

/// The Gauss-Christoffel rule of the discrete output measure: nodes are the
/// eigenvalues of `T`, weights the squared first eigenvector components.
pub fn output_quadrature(fact: &LanczosFactorization) -> Result<QuadratureRule> {
    crate::quadrature::rule_from_jacobi(fact.jacobi(), RuleKind::LanczosOutput)
}

/// Recovers the orthonormal-polynomial values at the responses from the
/// Lanczos vectors: row `i` of `V` divided by `sqrt(nu_i)`.
pub fn polynomials_at_responses(fact: &LanczosFactorization) -> Result<PolynomialTable> {
    let n = fact.num_atoms();
    let k = fact.achieved_k();
    for (i, &w) in fact.weights().iter().enumerate() {
        if w == 0.0 {
            return Err(Error::ZeroWeightNode { index: i });
        }
    }
    let mut values = Mat::zeros(n, k);
    for i in 0..n {
        let root_w = fact.weights()[i].sqrt();
        for j in 0..k {
            values[(i, j)] = fact.v_entry(i, j) / root_w;
        }
    }
    Ok(PolynomialTable::from_parts(
        fact.response_values().to_vec(),
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{eval_polynomials, stieltjes_discrete};
    use crate::quadrature::{gauss_rule, reference_jacobi, MeasureSpec};

    fn uniform_unit() -> MeasureSpec {
        MeasureSpec::uniform_box(vec![(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn constant_responses_break_down_immediately() {
        let weights = vec![0.25; 4];
        let fact = lanczos_diagonal(&[3.5; 4], &weights, 3).unwrap();
        assert_eq!(fact.achieved_k(), 1);
        assert!((fact.jacobi().alpha()[0] - 3.5).abs() < 1e-14);
        assert!(fact.trailing_beta() < 1e-11);
    }

    #[test]
    fn first_column_is_root_weights() {
        let rule = gauss_rule(&uniform_unit(), 10).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), 4).unwrap();
        for (i, &w) in rule.weights().iter().enumerate() {
            assert!((fact.v_entry(i, 0) - w.sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_map_recovers_legendre() {
        // Responses = Gauss-Legendre nodes with their weights is the
        // discrete uniform measure, so T must match the closed form.
        let rule = gauss_rule(&uniform_unit(), 30).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), 5).unwrap();
        let reference = reference_jacobi(&uniform_unit(), 5).unwrap();
        assert!(fact.jacobi().max_abs_diff(&reference) < 1e-10);
        assert!(fact.orthogonality_defect() < 1e-12);
        assert!(fact.recurrence_residual() < 1e-10);
    }

    #[test]
    fn lanczos_equals_stieltjes_on_random_measures() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let n = 60;
            let nodes: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let measure = QuadratureRule::new(
                1,
                crate::quadrature::RuleKind::MonteCarlo,
                nodes.clone(),
                weights.clone(),
            )
            .unwrap();
            let fact = lanczos_diagonal(&nodes, &weights, 12).unwrap();
            let jac = stieltjes_discrete(&measure, 12).unwrap();
            assert!(fact.jacobi().max_abs_diff(&jac) < 1e-10);
        }
    }

    #[test]
    fn breakdown_caps_k_at_distinct_values() {
        let responses = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let weights = vec![1.0 / 6.0; 6];
        let fact = lanczos_diagonal(&responses, &weights, 5).unwrap();
        assert_eq!(fact.achieved_k(), 3);
        assert_eq!(fact.requested_k(), 5);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            lanczos_diagonal(&[1.0, 2.0], &[0.5, 0.5], 3),
            Err(Error::KExceedsAtoms { k: 3, atoms: 2 })
        ));
        assert!(matches!(
            lanczos_diagonal(&[1.0, 2.0], &[0.7, 0.7], 2),
            Err(Error::WeightsNotProbability { .. })
        ));
    }

    #[test]
    fn composite_linear_model_scales_beta() {
        let a0 = -1.7;
        let model = Model::new("linear", uniform_unit(), false, move |x: &[f64]| {
            Ok(a0 * x[0])
        });
        let rule = gauss_rule(&uniform_unit(), 40).unwrap();
        let fact = composite_factorization(&model, &rule, 5).unwrap();
        let reference = reference_jacobi(&uniform_unit(), 5).unwrap();
        for (i, &a) in fact.jacobi().alpha().iter().enumerate() {
            assert!(a.abs() < 1e-12, "alpha[{i}] = {a}");
        }
        for (i, &b) in fact.jacobi().beta().iter().enumerate() {
            assert!(
                (b - a0.abs() * reference.beta()[i]).abs() < 1e-11,
                "beta[{i}]"
            );
        }
        // Residual bound scales with the response magnitude.
        assert!(fact.recurrence_residual() < 1e-10 * a0.abs());
    }

    #[test]
    fn composite_reports_failing_node() {
        let model = Model::new("partial", uniform_unit(), false, |x: &[f64]| {
            if x[0] > 0.5 {
                Err(Error::InvalidArgument("blow-up".into()))
            } else {
                Ok(x[0])
            }
        });
        let rule = gauss_rule(&uniform_unit(), 9).unwrap();
        match composite_factorization(&model, &rule, 3) {
            Err(Error::ModelEvaluation { node, .. }) => {
                assert!(rule.node(node)[0] > 0.5);
            }
            other => panic!("expected model evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn full_rank_run_reproduces_empirical_measure() {
        // k = N: the output rule is the empirical measure itself, so all
        // moments up to degree 2N-1 agree.
        let n = 20;
        let rule = gauss_rule(&uniform_unit(), n).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), n).unwrap();
        assert_eq!(fact.achieved_k(), n);
        let out = output_quadrature(&fact).unwrap();
        for p in 0..(2 * n as u32) {
            let direct = rule.integrate(|x| x[0].powi(p as i32));
            let via_output = out.integrate(|y| y[0].powi(p as i32));
            assert!(
                (direct - via_output).abs() < 1e-9,
                "moment {p}: {direct} vs {via_output}"
            );
        }
    }

    #[test]
    fn output_quadrature_matches_gauss_for_identity_map() {
        let rule = gauss_rule(&uniform_unit(), 50).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), 5).unwrap();
        let out = output_quadrature(&fact).unwrap();
        let expect = gauss_rule(&uniform_unit(), 5).unwrap();
        for i in 0..5 {
            assert!((out.nodes_1d()[i] - expect.nodes_1d()[i]).abs() < 1e-10);
            assert!((out.weights()[i] - expect.weights()[i]).abs() < 1e-10);
        }
        assert!((pairwise_sum(out.weights()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_model_output_is_point_mass() {
        let weights = vec![0.2; 5];
        let fact = lanczos_diagonal(&[7.0; 5], &weights, 2).unwrap();
        let out = output_quadrature(&fact).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.nodes_1d()[0] - 7.0).abs() < 1e-13);
        assert_eq!(out.weights(), &[1.0]);
    }

    #[test]
    fn polynomial_table_matches_direct_evaluation() {
        let rule = gauss_rule(&uniform_unit(), 40).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), 5).unwrap();
        let table = polynomials_at_responses(&fact).unwrap();
        for i in 0..rule.len() {
            assert!((table.value(i, 0) - 1.0).abs() < 1e-12);
        }
        let reference = reference_jacobi(&uniform_unit(), 5).unwrap();
        let direct = eval_polynomials(&reference, rule.nodes_1d());
        for i in 0..rule.len() {
            for j in 0..5 {
                assert!(
                    (table.value(i, j) - direct.value(i, j)).abs() < 1e-8,
                    "entry ({i},{j})"
                );
            }
        }
        assert!(table.max_orthonormality_defect(rule.weights()) < 1e-10);
    }

    #[test]
    fn json_respects_vector_flag() {
        let rule = gauss_rule(&uniform_unit(), 6).unwrap();
        let fact = lanczos_diagonal(rule.nodes_1d(), rule.weights(), 3).unwrap();
        let with = fact.to_json(true);
        assert_eq!(with["v"].as_array().unwrap().len(), 6);
        let without = fact.to_json(false);
        assert!(without["v"].is_null());
        assert_eq!(without["achieved_k"], 3);
    }
}
