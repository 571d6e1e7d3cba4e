//! Experiment engine: JSON-configured convergence studies with CSV and JSON
//! reports.
//!
//! Four studies are provided: output-space quadrature convergence on nested
//! Clenshaw-Curtis grids, matrix convergence over node-count and iteration
//! grids, slice-count comparisons of the Riemann-sum estimators against
//! their quadrature-based counterparts, and a Monte Carlo mode comparison
//! where both families consume identical samples.
//!
//! Reports are deterministic functions of their configs (seeded sampling,
//! fixed-order reductions); wall-clock columns are the only nondeterministic
//! output. Thread count follows `RAYON_NUM_THREADS`; the tensor node budget
//! follows `LSDR_NODE_BUDGET`.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{
    composite_factorization, lanczos_diagonal, output_quadrature, polynomials_at_responses,
};
use crate::linalg::Mat;
use crate::models::{
    default_ex1_params, default_ex2_direction, model_ex1, model_ex2, model_ex3_otl, Model,
};
use crate::quadrature::{
    clenshaw_curtis_rule, gauss_rule, monte_carlo_rule, tensor_rule, MeasureSpec, QuadratureRule,
    RuleKind,
};
use crate::sdr::{
    lsave_truncated, lsir_truncated, relative_error, save, sir, Estimator, SdrMatrix,
};

/// Default seed for the seeded-random model constants when a config does not
/// pin them.
pub const DEFAULT_MODEL_SEED: u64 = 17;

/// Model selection by registry name, with optional explicit constants. The
/// seeded-random defaults are resolved once and recorded in the report so a
/// run is fully reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    /// One of `ex1`, `ex2`, `otl`.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub allow_nonstandardized: bool,
}

impl ModelSpec {
    pub fn by_name(name: &str) -> ModelSpec {
        ModelSpec {
            name: name.to_string(),
            a: None,
            g: None,
            h: None,
            seed: None,
            dim: None,
            allow_nonstandardized: false,
        }
    }

    /// Builds the model and returns it with a record of the resolved
    /// constants.
    pub fn resolve(&self) -> Result<(Model, serde_json::Value)> {
        let seed = self.seed.unwrap_or(DEFAULT_MODEL_SEED);
        let (model, resolved) = match self.name.as_str() {
            "ex1" => {
                let (g, h) = match (self.g, self.h) {
                    (Some(g), Some(h)) => (g, h),
                    (None, None) => default_ex1_params(seed),
                    _ => return Err(Error::Config("ex1 needs both g and h, or neither".into())),
                };
                (
                    model_ex1(g, h)?,
                    serde_json::json!({"name": "ex1", "g": g, "h": h}),
                )
            }
            "ex2" => {
                let a = match &self.a {
                    Some(a) => a.clone(),
                    None => default_ex2_direction(seed, self.dim.unwrap_or(5)),
                };
                (
                    model_ex2(a.clone())?,
                    serde_json::json!({"name": "ex2", "a": a}),
                )
            }
            "otl" | "ex3" => (model_ex3_otl(), serde_json::json!({"name": "otl"})),
            other => {
                return Err(Error::Config(format!("unknown model '{other}'")));
            }
        };
        let model = if self.allow_nonstandardized {
            model.with_standardization_override()
        } else {
            model
        };
        Ok((model, resolved))
    }
}

/// Input-rule selection.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RuleSpec {
    /// Tensor product of per-dimension Gauss rules.
    Gauss { points_per_dim: usize },
    /// Tensor product of nested Clenshaw-Curtis rules at one level.
    ClenshawCurtis { level: u32 },
    /// Seeded Monte Carlo sampling of the model measure.
    MonteCarlo { samples: usize, seed: u64 },
}

/// The dominating run used as the "true" matrix in error studies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub points_per_dim: usize,
    pub k: usize,
}

/// Output file locations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
}

/// Estimator selection for the `estimate` verb and matrix studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Sir,
    Save,
    Lsir,
    Lsave,
}

/// One JSON config drives one study; each study reads the fields it needs
/// and rejects configs that miss them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_grid: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One measurement: a metric value at a parameter setting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportRow {
    pub study: String,
    pub param_name: String,
    pub param_value: f64,
    pub metric: String,
    pub value: f64,
    pub wall_ms: f64,
}

/// Least-squares log-log slope fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeFit {
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

/// Study output: measurement rows plus fitted slopes and the resolved model
/// constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub study: String,
    pub rows: Vec<ReportRow>,
    pub slopes: Vec<SlopeFit>,
    pub resolved_model: serde_json::Value,
}

impl ConvergenceReport {
    fn new(study: &str, resolved_model: serde_json::Value) -> Self {
        ConvergenceReport {
            study: study.to_string(),
            rows: Vec::new(),
            slopes: Vec::new(),
            resolved_model,
        }
    }

    fn push(
        &mut self,
        param_name: &str,
        param_value: f64,
        metric: String,
        value: f64,
        wall_ms: f64,
    ) {
        self.rows.push(ReportRow {
            study: self.study.clone(),
            param_name: param_name.to_string(),
            param_value,
            metric,
            value,
            wall_ms,
        });
    }

    /// `(param_value, value)` pairs of one metric, in row order.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.param_value, r.value))
            .collect()
    }

    pub fn slope_for(&self, metric: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.metric == metric)
    }

    /// Everything except wall-clock times: the deterministic content of the
    /// report.
    pub fn numeric_rows(&self) -> Vec<(String, String, f64, String, f64)> {
        self.rows
            .iter()
            .map(|r| {
                (
                    r.study.clone(),
                    r.param_name.clone(),
                    r.param_value,
                    r.metric.clone(),
                    r.value,
                )
            })
            .collect()
    }

    /// CSV with the fixed column set
    /// `study,param_name,param_value,metric,value,wall_ms`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("study,param_name,param_value,metric,value,wall_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.study, r.param_name, r.param_value, r.metric, r.value, r.wall_ms
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &str) -> Result<()> {
        let mut file = create_with_parents(path)?;
        file.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn write_json(&self, path: &str) -> Result<()> {
        let file = create_with_parents(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    /// Writes CSV and JSON to the configured paths, when present.
    pub fn write_outputs(&self, output: &OutputSpec) -> Result<()> {
        if let Some(path) = &output.csv {
            self.write_csv(path)?;
        }
        if let Some(path) = &output.json {
            self.write_json(path)?;
        }
        Ok(())
    }
}

/// Creates a file, making any missing parent directories first.
pub fn create_with_parents(path: &str) -> Result<std::fs::File> {
    if let Some(parent) = std::path::Path::new(path).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::fs::File::create(path)?)
}

/// Fits `log(value) = slope * log(param) + intercept` over the positive
/// entries of a series. At least three usable points are required.
pub fn fit_loglog_slope(metric: &str, series: &[(f64, f64)]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(p, v)| *p > 0.0 && *v > 0.0)
        .map(|&(p, v)| (p.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Config(format!(
            "slope fit for '{metric}' needs at least 3 positive points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return Err(Error::Config(format!(
            "slope fit for '{metric}' has no parameter spread"
        )));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (pts
        .iter()
        .map(|&(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeFit {
        metric: metric.to_string(),
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Tensor product of per-dimension Gauss rules for a product measure.
pub fn tensor_gauss_rule(measure: &MeasureSpec, points_per_dim: usize) -> Result<QuadratureRule> {
    let per_dim: Vec<QuadratureRule> = (0..measure.dim())
        .map(|i| gauss_rule(&measure.marginal(i), points_per_dim))
        .collect::<Result<_>>()?;
    tensor_rule(&per_dim)
}

/// Tensor product of Clenshaw-Curtis rules at one level, affinely mapped to
/// the bounds of a uniform-box measure.
pub fn tensor_clenshaw_curtis_rule(measure: &MeasureSpec, level: u32) -> Result<QuadratureRule> {
    let bounds = match measure {
        MeasureSpec::UniformBox { bounds } => bounds.clone(),
        MeasureSpec::GaussianStandard { .. } => {
            return Err(Error::Config(
                "clenshaw-curtis rules require a uniform-box measure".into(),
            ))
        }
    };
    let base = clenshaw_curtis_rule(level)?;
    let per_dim: Vec<QuadratureRule> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let nodes = base.nodes_1d().iter().map(|x| mid + half * x).collect();
            QuadratureRule::new(1, RuleKind::ClenshawCurtis, nodes, base.weights().to_vec())
        })
        .collect::<Result<_>>()?;
    tensor_rule(&per_dim)
}

/// Builds the input rule named by a config for the given measure.
pub fn build_rule(spec: &RuleSpec, measure: &MeasureSpec) -> Result<QuadratureRule> {
    match spec {
        RuleSpec::Gauss { points_per_dim } => tensor_gauss_rule(measure, *points_per_dim),
        RuleSpec::ClenshawCurtis { level } => tensor_clenshaw_curtis_rule(measure, *level),
        RuleSpec::MonteCarlo { samples, seed } => monte_carlo_rule(measure, *samples, *seed),
    }
}

fn require<T: Clone>(field: &Option<T>, name: &str) -> Result<T> {
    field
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required config field '{name}'")))
}

fn resolve_model(config: &ExperimentConfig) -> Result<(Model, serde_json::Value)> {
    require(&config.model, "model")?.resolve()
}

fn check_ascending<T: PartialOrd + std::fmt::Debug>(grid: &[T], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("grid '{name}' is empty")));
    }
    for i in 1..grid.len() {
        if grid[i] <= grid[i - 1] {
            return Err(Error::Config(format!(
                "grid '{name}' must be strictly ascending at index {i}"
            )));
        }
    }
    Ok(())
}

fn evaluate_responses(model: &Model, rule: &QuadratureRule) -> Result<Vec<f64>> {
    let evals: Vec<std::result::Result<f64, Error>> = (0..rule.len())
        .into_par_iter()
        .map(|i| model.eval(rule.node(i)))
        .collect();
    let mut out = Vec::with_capacity(evals.len());
    for (i, r) in evals.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::ModelEvaluation {
                    node: i,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Output-space quadrature and polynomial convergence on nested
/// Clenshaw-Curtis input grids.
///
/// For each pair of consecutive levels the study reports per-node and
/// per-weight differences of the `k`-point output rule, and the max-abs
/// difference of each recovered orthonormal polynomial on the shared
/// (nested) node subset.
pub fn run_quadrature_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (model, resolved) = resolve_model(config)?;
    let levels = require(&config.level_grid, "level_grid")?;
    check_ascending(&levels, "level_grid")?;
    if levels.len() < 2 {
        return Err(Error::Config(
            "level_grid needs at least two levels for subsequent differences".into(),
        ));
    }
    if let Some(spec) = &config.rule {
        if !matches!(spec, RuleSpec::ClenshawCurtis { .. }) {
            return Err(Error::NonNestedRule);
        }
    }
    let k = require(&config.k, "k")?;
    let mut report = ConvergenceReport::new("quadrature_convergence", resolved);

    struct LevelData {
        rule: QuadratureRule,
        out: QuadratureRule,
        table: crate::orthopoly::PolynomialTable,
    }
    let mut prev: Option<LevelData> = None;
    for &level in &levels {
        let start = Instant::now();
        let rule = tensor_clenshaw_curtis_rule(model.measure(), level)?;
        let fact = composite_factorization(&model, &rule, k)?;
        let out = output_quadrature(&fact)?;
        let table = polynomials_at_responses(&fact)?;
        let cur = LevelData { rule, out, table };

        if let Some(coarse) = &prev {
            let k_common = coarse.out.len().min(cur.out.len());
            let mut node_max = 0.0_f64;
            let mut weight_max = 0.0_f64;
            for i in 0..k_common {
                let dn = (cur.out.nodes_1d()[i] - coarse.out.nodes_1d()[i]).abs();
                let dw = (cur.out.weights()[i] - coarse.out.weights()[i]).abs();
                report.push("level", level as f64, format!("node_diff_{i}"), dn, 0.0);
                report.push("level", level as f64, format!("weight_diff_{i}"), dw, 0.0);
                node_max = node_max.max(dn);
                weight_max = weight_max.max(dw);
            }

            // Restriction of the fine polynomial table to the coarse nodes:
            // nesting is exact, so coordinates match bit-for-bit.
            let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(cur.rule.len());
            for p in 0..cur.rule.len() {
                let key: Vec<u64> = cur.rule.node(p).iter().map(|x| x.to_bits()).collect();
                index.insert(key, p);
            }
            let k_poly = coarse
                .table
                .num_polynomials()
                .min(cur.table.num_polynomials());
            let mut poly_overall = 0.0_f64;
            let mut poly_max = vec![0.0_f64; k_poly];
            for p in 0..coarse.rule.len() {
                let key: Vec<u64> = coarse.rule.node(p).iter().map(|x| x.to_bits()).collect();
                let fine_row = *index.get(&key).ok_or(Error::NonNestedRule)?;
                for (j, slot) in poly_max.iter_mut().enumerate() {
                    *slot =
                        slot.max((cur.table.value(fine_row, j) - coarse.table.value(p, j)).abs());
                }
            }
            for (j, &d) in poly_max.iter().enumerate() {
                report.push("level", level as f64, format!("poly_maxdiff_{j}"), d, 0.0);
                poly_overall = poly_overall.max(d);
            }
            let wall = ms(start);
            report.push(
                "level",
                level as f64,
                "node_diff_max".into(),
                node_max,
                wall,
            );
            report.push(
                "level",
                level as f64,
                "weight_diff_max".into(),
                weight_max,
                wall,
            );
            report.push(
                "level",
                level as f64,
                "poly_maxdiff_max".into(),
                poly_overall,
                wall,
            );
        }
        prev = Some(cur);
    }
    if let Ok(fit) = fit_loglog_slope("node_diff_max", &report.series("node_diff_max")) {
        report.slopes.push(fit);
    }
    Ok(report)
}

fn truncated_estimate(
    choice: EstimatorChoice,
    fact: &crate::lanczos::LanczosFactorization,
    rule: &QuadratureRule,
    k: usize,
) -> Result<SdrMatrix> {
    match choice {
        EstimatorChoice::Lsir => Ok(lsir_truncated(fact, rule, k)?.0),
        EstimatorChoice::Lsave => Ok(lsave_truncated(fact, rule, k)?.0),
        _ => Err(Error::Config(
            "matrix convergence study needs a quadrature-based estimator (lsir or lsave)".into(),
        )),
    }
}

/// Matrix convergence of LSIR or LSAVE: subsequent differences over the
/// points-per-dimension grid at the largest `k`, over the `k` grid at the
/// largest node count, and the full relative-error grid against the
/// reference run.
pub fn run_matrix_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (model, resolved) = resolve_model(config)?;
    let points_grid = require(&config.points_grid, "points_grid")?;
    let k_grid = require(&config.k_grid, "k_grid")?;
    let reference = require(&config.reference, "reference")?;
    let choice = require(&config.estimator, "estimator")?;
    check_ascending(&points_grid, "points_grid")?;
    check_ascending(&k_grid, "k_grid")?;
    let max_points = *points_grid.last().unwrap();
    let max_k = *k_grid.last().unwrap();
    if reference.points_per_dim < max_points || reference.k < max_k {
        return Err(Error::Config(
            "reference spec must dominate every grid point".into(),
        ));
    }

    let mut report = ConvergenceReport::new("matrix_convergence", resolved);

    let ref_rule = tensor_gauss_rule(model.measure(), reference.points_per_dim)?;
    let ref_fact = composite_factorization(&model, &ref_rule, reference.k)?;
    let c_ref = truncated_estimate(choice, &ref_fact, &ref_rule, reference.k)?;

    // One factorization per node count at the largest k; every smaller k is
    // a truncation of the same run (iteration i only ever reads columns
    // 0..=i, so the prefix is bit-identical to a shorter run).
    let mut per_points: Vec<(usize, QuadratureRule, crate::lanczos::LanczosFactorization)> =
        Vec::new();
    for &points in &points_grid {
        let rule = tensor_gauss_rule(model.measure(), points)?;
        let fact = composite_factorization(&model, &rule, max_k)?;
        per_points.push((points, rule, fact));
    }

    // Subsequent differences over the node-count grid at fixed max k.
    let mut prev: Option<SdrMatrix> = None;
    for (points, rule, fact) in &per_points {
        let start = Instant::now();
        let c = truncated_estimate(choice, fact, rule, max_k)?;
        if let Some(p) = &prev {
            let d = crate::sdr::frobenius_distance(c.matrix(), p.matrix())?;
            report.push(
                "points_per_dim",
                *points as f64,
                "subsequent_diff_points".into(),
                d,
                ms(start),
            );
        }
        prev = Some(c);
    }

    // Subsequent differences over the k grid at the largest node count.
    let (_, max_rule, max_fact) = per_points.last().unwrap();
    let mut prev_k: Option<SdrMatrix> = None;
    for &k in &k_grid {
        let start = Instant::now();
        let c = truncated_estimate(choice, max_fact, max_rule, k)?;
        if let Some(p) = &prev_k {
            let d = crate::sdr::frobenius_distance(c.matrix(), p.matrix())?;
            report.push("k", k as f64, "subsequent_diff_k".into(), d, ms(start));
        }
        prev_k = Some(c);
    }

    // Relative errors against the reference over the full 2-d grid.
    for (points, rule, fact) in &per_points {
        for &k in &k_grid {
            let start = Instant::now();
            let c = truncated_estimate(choice, fact, rule, k)?;
            let err = relative_error(c.matrix(), c_ref.matrix())?;
            report.push(
                "points_per_dim",
                *points as f64,
                format!("rel_error_k{k}"),
                err,
                ms(start),
            );
        }
    }

    if let Ok(fit) = fit_loglog_slope(
        "subsequent_diff_points",
        &report.series("subsequent_diff_points"),
    ) {
        report.slopes.push(fit);
    }
    Ok(report)
}

/// Riemann-sum rate study: Frobenius error of the slice-based SIR and SAVE
/// estimates against their quadrature-based references, over a slice-count
/// grid, with fitted log-log slopes.
pub fn run_slice_comparison(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (model, resolved) = resolve_model(config)?;
    let samples = require(&config.mc_samples, "mc_samples")?;
    let seed = require(&config.seed, "seed")?;
    let r_grid = require(&config.r_grid, "r_grid")?;
    let reference = require(&config.reference, "reference")?;
    check_ascending(&r_grid, "r_grid")?;

    let mut report = ConvergenceReport::new("slice_comparison", resolved);

    let ref_rule = tensor_gauss_rule(model.measure(), reference.points_per_dim)?;
    let ref_fact = composite_factorization(&model, &ref_rule, reference.k)?;
    let c_ir = lsir_truncated(&ref_fact, &ref_rule, reference.k)?.0;
    let c_ave = lsave_truncated(&ref_fact, &ref_rule, reference.k)?.0;

    let mc = monte_carlo_rule(model.measure(), samples, seed)?;
    let x = Mat::from_row_major(samples, model.dim(), mc.nodes_flat().to_vec());
    let y = evaluate_responses(&model, &mc)?;

    for &r in &r_grid {
        let start = Instant::now();
        let c_sir = sir(&x, &y, r)?;
        let err_sir = relative_error(c_sir.matrix(), c_ir.matrix())?;
        report.push(
            "slices",
            r as f64,
            "sir_rel_error".into(),
            err_sir,
            ms(start),
        );

        let start = Instant::now();
        let c_save = save(&x, &y, r)?;
        let err_save = relative_error(c_save.matrix(), c_ave.matrix())?;
        report.push(
            "slices",
            r as f64,
            "save_rel_error".into(),
            err_save,
            ms(start),
        );
    }
    for metric in ["sir_rel_error", "save_rel_error"] {
        if let Ok(fit) = fit_loglog_slope(metric, &report.series(metric)) {
            report.slopes.push(fit);
        }
    }
    Ok(report)
}

/// Monte Carlo mode comparison: SIR over a slice grid and LSIR over an
/// iteration grid consume identical seeded samples at each sample count;
/// errors are taken against the quadrature reference and the per-`N`
/// best-case SIR envelope is reported alongside.
pub fn run_mc_mode_comparison(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let (model, resolved) = resolve_model(config)?;
    let sample_grid = require(&config.sample_grid, "sample_grid")?;
    let r_grid = require(&config.r_grid, "r_grid")?;
    let k_grid = require(&config.k_grid, "k_grid")?;
    let seed = require(&config.seed, "seed")?;
    let reference = require(&config.reference, "reference")?;
    check_ascending(&sample_grid, "sample_grid")?;
    check_ascending(&r_grid, "r_grid")?;
    check_ascending(&k_grid, "k_grid")?;

    let mut report = ConvergenceReport::new("mc_mode_comparison", resolved);

    let ref_rule = tensor_gauss_rule(model.measure(), reference.points_per_dim)?;
    let ref_fact = composite_factorization(&model, &ref_rule, reference.k)?;
    let c_ir = lsir_truncated(&ref_fact, &ref_rule, reference.k)?.0;

    let max_k = *k_grid.last().unwrap();
    for (idx, &n) in sample_grid.iter().enumerate() {
        let seed_n = seed.wrapping_add(idx as u64);
        let mc = monte_carlo_rule(model.measure(), n, seed_n)?;
        let x = Mat::from_row_major(n, model.dim(), mc.nodes_flat().to_vec());
        let y = evaluate_responses(&model, &mc)?;

        let mut best = f64::INFINITY;
        for &r in &r_grid {
            let start = Instant::now();
            let c = sir(&x, &y, r)?;
            let err = relative_error(c.matrix(), c_ir.matrix())?;
            best = best.min(err);
            report.push(
                "samples",
                n as f64,
                format!("sir_rel_error_R{r}"),
                err,
                ms(start),
            );
        }
        report.push("samples", n as f64, "sir_best_case".into(), best, 0.0);

        let start = Instant::now();
        let fact = lanczos_diagonal(&y, mc.weights(), max_k.min(n))?;
        for &k in &k_grid {
            let c = lsir_truncated(&fact, &mc, k)?.0;
            let err = relative_error(c.matrix(), c_ir.matrix())?;
            report.push(
                "samples",
                n as f64,
                format!("lsir_rel_error_k{k}"),
                err,
                ms(start),
            );
        }
    }
    Ok(report)
}

/// Builds the rule requested by a config (`quadrature` verb). The measure
/// comes from the config when given, otherwise from the model.
pub fn build_configured_rule(config: &ExperimentConfig) -> Result<QuadratureRule> {
    let spec = require(&config.rule, "rule")?;
    let measure = match &config.measure {
        Some(m) => m.clone(),
        None => resolve_model(config)?.0.measure().clone(),
    };
    build_rule(&spec, &measure)
}

/// Runs one estimator per the config (`estimate` verb) and returns its
/// matrix. Slice-based estimators require a Monte Carlo rule spec and `r`;
/// quadrature-based ones require `k`.
pub fn run_estimate(config: &ExperimentConfig) -> Result<SdrMatrix> {
    let (model, _) = resolve_model(config)?;
    let choice = require(&config.estimator, "estimator")?;
    let spec = require(&config.rule, "rule")?;
    let rule = build_rule(&spec, model.measure())?;
    match choice {
        EstimatorChoice::Sir | EstimatorChoice::Save => {
            if !matches!(spec, RuleSpec::MonteCarlo { .. }) {
                return Err(Error::Config(
                    "slice-based estimators need a monte_carlo rule".into(),
                ));
            }
            let r = require(&config.r, "r")?;
            let x = Mat::from_row_major(rule.len(), model.dim(), rule.nodes_flat().to_vec());
            let y = evaluate_responses(&model, &rule)?;
            if choice == EstimatorChoice::Sir {
                sir(&x, &y, r)
            } else {
                save(&x, &y, r)
            }
        }
        EstimatorChoice::Lsir => {
            let k = require(&config.k, "k")?;
            Ok(crate::sdr::lsir(&model, &rule, k)?.0)
        }
        EstimatorChoice::Lsave => {
            let k = require(&config.k, "k")?;
            Ok(crate::sdr::lsave(&model, &rule, k)?.0)
        }
    }
}

/// Eigen-summary CSV of an SDR matrix: `index,value` rows, eigenvalues
/// descending.
pub fn eigen_summary_csv(matrix: &SdrMatrix) -> String {
    let mut out = String::from("index,value\n");
    for (i, v) in matrix.eigenvalues().iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

impl Estimator {
    pub fn from_choice(choice: EstimatorChoice) -> Estimator {
        match choice {
            EstimatorChoice::Sir => Estimator::Sir,
            EstimatorChoice::Save => Estimator::Save,
            EstimatorChoice::Lsir => Estimator::Lsir,
            EstimatorChoice::Lsave => Estimator::Lsave,
        }
    }
}
