//! Regression baselines that predict mixture performance from the mixture
//! weights, and the randomized protocol comparing them with merged proxies.

use crate::error::{param_err, shape_err, Error, Result};
use crate::evalx::{spearman, RunRecord, MATCH_TOLERANCE};
use crate::linalg::{self, Matrix};
use crate::rng;
use crate::simplex::MixtureWeights;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMap {
    /// `[1, w_1..w_K]`
    Linear,
    /// `[1, w_1..w_K, w_i·w_j for i ≤ j]`
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub feature_map: FeatureMap,
    pub ridge_lambda: f64,
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec { feature_map: FeatureMap::Quadratic, ridge_lambda: 1e-6 }
    }
}

impl RegressorSpec {
    pub fn name(&self) -> String {
        match self.feature_map {
            FeatureMap::Linear => "ridge-linear".into(),
            FeatureMap::Quadratic => "ridge-quadratic".into(),
        }
    }

    /// Feature count including the bias column.
    pub fn feature_count(&self, k: usize) -> usize {
        match self.feature_map {
            FeatureMap::Linear => 1 + k,
            FeatureMap::Quadratic => 1 + k + k * (k + 1) / 2,
        }
    }

    /// Dimension of the function space the features span on the simplex
    /// (the constraint Σw = 1 makes some features redundant there).
    fn identifiable_rank(&self, k: usize) -> usize {
        match self.feature_map {
            FeatureMap::Linear => k,
            FeatureMap::Quadratic => k * (k + 1) / 2,
        }
    }

    pub fn features(&self, w: &MixtureWeights) -> Vec<f64> {
        let x = w.weights();
        let mut f = Vec::with_capacity(self.feature_count(x.len()));
        f.push(1.0);
        f.extend_from_slice(x);
        if self.feature_map == FeatureMap::Quadratic {
            for i in 0..x.len() {
                for j in i..x.len() {
                    f.push(x[i] * x[j]);
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub spec: RegressorSpec,
    pub k: usize,
    /// Bias first, then one coefficient per feature.
    pub coefficients: Vec<f64>,
}

impl RegressionModel {
    pub fn non_bias_norm(&self) -> f64 {
        linalg::norm(&self.coefficients[1..])
    }
}

/// Ridge regression with an unpenalized bias.
///
/// With `λ > 0` the regularized normal equations are solved by Cholesky. With
/// `λ = 0` a pivoted QR least-squares solve is used; it fails when the runs do
/// not pin down the model on the simplex.
pub fn fit_ridge(runs: &[(MixtureWeights, f64)], spec: &RegressorSpec) -> Result<RegressionModel> {
    if runs.len() < 2 {
        return Err(param_err("need at least two runs to fit a regressor"));
    }
    if !(spec.ridge_lambda >= 0.0) || !spec.ridge_lambda.is_finite() {
        return Err(param_err("ridge lambda must be finite and >= 0"));
    }
    let k = runs[0].0.k();
    if runs.iter().any(|(w, _)| w.k() != k) {
        return Err(shape_err("runs have different domain counts"));
    }
    if runs.iter().any(|(_, y)| !y.is_finite()) {
        return Err(param_err("targets must be finite"));
    }
    let p = spec.feature_count(k);
    let rows: Vec<Vec<f64>> = runs.iter().map(|(w, _)| spec.features(w)).collect();
    let phi = Matrix::from_rows(&rows)?;
    let y: Vec<f64> = runs.iter().map(|(_, t)| *t).collect();
    let coefficients = if spec.ridge_lambda > 0.0 {
        let mut a = phi.transpose().matmul(&phi)?;
        for j in 1..p {
            a[(j, j)] += spec.ridge_lambda;
        }
        let b = phi.transpose().matvec(&y)?;
        linalg::solve_spd(&a, &b)?
    } else {
        let (beta, rank) = linalg::lstsq_pivoted(&phi, &y, 1e-10)?;
        let needed = spec.identifiable_rank(k);
        if rank < needed {
            return Err(Error::Numeric(format!(
                "singular normal matrix at lambda = 0 (rank {rank} < {needed}); use lambda > 0"
            )));
        }
        beta
    };
    Ok(RegressionModel { spec: *spec, k, coefficients })
}

pub fn predict(model: &RegressionModel, w: &MixtureWeights) -> Result<f64> {
    if w.k() != model.k {
        return Err(shape_err(format!("model fitted for K={}, mixture has K={}", model.k, w.k())));
    }
    Ok(linalg::dot(&model.coefficients, &model.spec.features(w)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonProtocol {
    pub eval_set_size: usize,
    pub train_sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl ComparisonProtocol {
    /// `n = 8`, `T = 2..=population-n`, 100 trials.
    pub fn standard(population: usize, seed: u64) -> Self {
        ComparisonProtocol {
            eval_set_size: 8,
            train_sizes: (2..=population.saturating_sub(8)).collect(),
            trials: 100,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub train_size: usize,
    pub regressor_mean_spearman: f64,
    pub regressor_stderr: f64,
    pub proxy_mean_spearman: f64,
    pub proxy_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub regressor: String,
    pub rows: Vec<CurveRow>,
}

impl CurveReport {
    pub fn row(&self, t: usize) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.train_size == t)
    }

    pub fn to_csv(&self) -> String {
        use crate::io::{csv_line, num};
        let mut out =
            String::from("regressor,T,regressor_mean_spearman,regressor_stderr,proxy_mean_spearman,proxy_stderr\n");
        for r in &self.rows {
            out.push_str(&csv_line(&[
                self.regressor.clone(),
                r.train_size.to_string(),
                num(r.regressor_mean_spearman),
                num(r.regressor_stderr),
                num(r.proxy_mean_spearman),
                num(r.proxy_stderr),
            ]));
        }
        out
    }
}

/// Spearman where a constant column (no ranking information) counts as 0.
fn rank_agreement(pred: &[f64], truth: &[f64]) -> Result<f64> {
    match spearman(pred, truth) {
        Ok(r) => Ok(r),
        Err(Error::UndefinedCorrelation(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct TrialResult {
    regressor: Vec<f64>,
    proxy: f64,
}

/// Randomized fit-and-rank comparison.
///
/// Each trial draws a held-out set of `n` runs; for every `T` a regressor is
/// fitted on the first `T` runs of a random ordering of the remainder. The
/// regressor's and the proxy's rank agreement with the oracle are measured on
/// the same held-out set.
pub fn compare_protocol(
    all_runs: &[RunRecord],
    proxy_runs: &[RunRecord],
    spec: &RegressorSpec,
    proto: &ComparisonProtocol,
) -> Result<CurveReport> {
    if proto.eval_set_size < 2 {
        return Err(param_err("evaluation set needs at least 2 runs"));
    }
    if proto.trials == 0 {
        return Err(param_err("need at least one trial"));
    }
    if proto.train_sizes.is_empty() || proto.train_sizes.contains(&0) {
        return Err(param_err("train sizes must be positive"));
    }
    let max_t = *proto.train_sizes.iter().max().expect("nonempty");
    if all_runs.len() < proto.eval_set_size + max_t {
        return Err(Error::Capacity(format!(
            "population of {} runs cannot supply n={} plus T={max_t}",
            all_runs.len(),
            proto.eval_set_size
        )));
    }
    let proxy_scores: Vec<f64> = all_runs
        .iter()
        .map(|o| {
            proxy_runs
                .iter()
                .find(|p| p.mixture.approx_eq(&o.mixture, MATCH_TOLERANCE))
                .map(|p| p.average)
                .ok_or_else(|| Error::Pairing(vec![format!("no proxy for {}", o.mixture.to_json17())]))
        })
        .collect::<Result<_>>()?;
    let n = proto.eval_set_size;
    let trials: Vec<TrialResult> = (0..proto.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialResult> {
            let mut r = rng::stream(rng::derive(proto.seed, "trial", &[trial as u64]));
            let perm = rng::permutation(&mut r, all_runs.len());
            let (eval, rest) = perm.split_at(n);
            let truth: Vec<f64> = eval.iter().map(|&i| all_runs[i].average).collect();
            let proxy: Vec<f64> = eval.iter().map(|&i| proxy_scores[i]).collect();
            let mut regressor = Vec::with_capacity(proto.train_sizes.len());
            for &t in &proto.train_sizes {
                let train: Vec<(MixtureWeights, f64)> =
                    rest[..t].iter().map(|&i| (all_runs[i].mixture.clone(), all_runs[i].average)).collect();
                let model = if train.len() >= 2 { Some(fit_ridge(&train, spec)?) } else { None };
                let pred: Vec<f64> = match &model {
                    Some(m) => eval.iter().map(|&i| predict(m, &all_runs[i].mixture)).collect::<Result<_>>()?,
                    // A single run carries no ranking information.
                    None => vec![train[0].1; n],
                };
                regressor.push(rank_agreement(&pred, &truth)?);
            }
            Ok(TrialResult { regressor, proxy: rank_agreement(&proxy, &truth)? })
        })
        .collect::<Result<_>>()?;
    let proxy_vals: Vec<f64> = trials.iter().map(|t| t.proxy).collect();
    let (proxy_mean, proxy_se) = mean_stderr(&proxy_vals);
    let rows = proto
        .train_sizes
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let vals: Vec<f64> = trials.iter().map(|tr| tr.regressor[j]).collect();
            let (m, se) = mean_stderr(&vals);
            CurveRow {
                train_size: t,
                regressor_mean_spearman: m,
                regressor_stderr: se,
                proxy_mean_spearman: proxy_mean,
                proxy_stderr: proxy_se,
            }
        })
        .collect();
    Ok(CurveReport { regressor: spec.name(), rows })
}
