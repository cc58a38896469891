//! Performance measures, rank statistics and selection-quality tables.

use crate::error::{param_err, shape_err, Error, Result};
use crate::params::ParamVector;
use crate::simplex::{uniform_mixture, MixtureWeights};
use crate::synth::SampleSet;
use crate::train::predict;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Mixtures are paired across run lists when their weights agree to this tolerance.
pub const MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: String,
    pub data: SampleSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSuite {
    benchmarks: Vec<Benchmark>,
    weights: Option<Vec<f64>>,
}

impl BenchmarkSuite {
    pub fn new(benchmarks: Vec<Benchmark>, weights: Option<Vec<f64>>) -> Result<Self> {
        if benchmarks.is_empty() {
            return Err(param_err("benchmark suite is empty"));
        }
        let mut names: Vec<&str> = benchmarks.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|p| p[0] == p[1]) {
            return Err(param_err("benchmark names must be unique"));
        }
        if let Some(w) = &weights {
            if w.len() != benchmarks.len() || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(param_err("benchmark weights must be nonnegative, one per benchmark"));
            }
        }
        if benchmarks.iter().any(|b| b.data.is_empty()) {
            return Err(param_err("benchmark with no samples"));
        }
        Ok(BenchmarkSuite { benchmarks, weights })
    }

    pub fn benchmarks(&self) -> &[Benchmark] {
        &self.benchmarks
    }

    pub fn names(&self) -> Vec<String> {
        self.benchmarks.iter().map(|b| b.name.clone()).collect()
    }

    /// Weighted mean of the per-benchmark scores (uniform by default).
    pub fn average(&self, scores: &BTreeMap<String, f64>) -> f64 {
        let weights: Vec<f64> = match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.benchmarks.len()],
        };
        let total: f64 = weights.iter().sum();
        self.benchmarks.iter().zip(&weights).map(|(b, w)| w * scores[&b.name]).sum::<f64>() / total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub scores: BTreeMap<String, f64>,
    pub average: f64,
}

/// Accuracy of `model` on each benchmark plus the suite average.
pub fn evaluate(model: &ParamVector, suite: &BenchmarkSuite) -> Result<Scores> {
    let mut scores = BTreeMap::new();
    for b in &suite.benchmarks {
        let pred = predict(model, &b.data)?;
        let correct = pred.iter().zip(b.data.labels()).filter(|(p, y)| p == y).count();
        scores.insert(b.name.clone(), correct as f64 / b.data.len() as f64);
    }
    let average = suite.average(&scores);
    Ok(Scores { scores, average })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Trained,
    MergedProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mixture: MixtureWeights,
    pub provenance: Provenance,
    pub budget: usize,
    pub scores: BTreeMap<String, f64>,
    pub average: f64,
    pub seed: u64,
}

impl RunRecord {
    pub fn new(mixture: MixtureWeights, provenance: Provenance, budget: usize, scores: Scores, seed: u64) -> Self {
        RunRecord { mixture, provenance, budget, scores: scores.scores, average: scores.average, seed }
    }

    pub fn score(&self, target: &Target) -> Result<f64> {
        match target {
            Target::Average => Ok(self.average),
            Target::Benchmark(name) => self
                .scores
                .get(name)
                .copied()
                .ok_or_else(|| Error::Absence(format!("benchmark '{name}' not in run record"))),
        }
    }
}

/// What a mixture is optimized for: one benchmark (specialist) or the suite average (generalist).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Benchmark(String),
    Average,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Benchmark(n) => f.write_str(n),
            Target::Average => f.write_str("average"),
        }
    }
}

/// Average (fractional) ranks, 1-based.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank mean(i+1..=j+1).
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(shape_err(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(param_err("need at least two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(param_err("values must be finite"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    // Mean rank is (n+1)/2 regardless of ties.
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("all values tie in one argument".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub target: Target,
    pub uniform: f64,
    pub median: f64,
    pub selected: f64,
    pub best: f64,
    pub selected_mixture: MixtureWeights,
}

impl SelectionRow {
    pub fn regret(&self) -> f64 {
        self.best - self.selected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
}

impl SelectionReport {
    pub fn row(&self, target: &Target) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| &r.target == target)
    }

    pub fn to_csv(&self) -> String {
        use crate::io::{csv_line, num};
        let mut out = String::from("target,uniform,median,selected,best,regret,selected_mixture\n");
        for r in &self.rows {
            out.push_str(&csv_line(&[
                r.target.to_string(),
                num(r.uniform),
                num(r.median),
                num(r.selected),
                num(r.best),
                num(r.regret()),
                r.selected_mixture.to_json17(),
            ]));
        }
        out
    }
}

/// Index of the largest score; ties go to the lexicographically smallest mixture.
pub fn argmax_mixture(mixtures: &[&MixtureWeights], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..scores.len() {
        best = match best {
            None => Some(i),
            Some(b) => {
                if scores[i] > scores[b] || (scores[i] == scores[b] && mixtures[i].lex_cmp(mixtures[b]).is_lt()) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pairs each oracle run with the proxy run of the same mixture.
pub fn pair_runs<'a>(oracle: &'a [RunRecord], proxy: &'a [RunRecord]) -> Result<Vec<(&'a RunRecord, &'a RunRecord)>> {
    let mut pairs = Vec::with_capacity(oracle.len());
    let mut used = vec![false; proxy.len()];
    let mut unmatched = Vec::new();
    for o in oracle {
        match proxy.iter().enumerate().find(|(j, p)| !used[*j] && p.mixture.approx_eq(&o.mixture, MATCH_TOLERANCE)) {
            Some((j, p)) => {
                used[j] = true;
                pairs.push((o, p));
            }
            None => unmatched.push(format!("oracle {}", o.mixture.to_json17())),
        }
    }
    for (j, p) in proxy.iter().enumerate() {
        if !used[j] {
            unmatched.push(format!("proxy {}", p.mixture.to_json17()));
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::Pairing(unmatched));
    }
    Ok(pairs)
}

/// Uniform / Median / Selected / Best per target.
///
/// `uniform_run` supplies the oracle run of the uniform mixture when it is not
/// one of the candidates; otherwise the candidate set must contain it.
pub fn selection_table(
    oracle_runs: &[RunRecord],
    proxy_runs: &[RunRecord],
    targets: &[Target],
    uniform_run: Option<&RunRecord>,
) -> Result<SelectionReport> {
    if oracle_runs.is_empty() {
        return Err(param_err("no candidate runs"));
    }
    if oracle_runs.iter().any(|r| r.provenance != Provenance::Trained)
        || proxy_runs.iter().any(|r| r.provenance != Provenance::MergedProxy)
    {
        return Err(param_err("oracle runs must be trained and proxy runs merged"));
    }
    let pairs = pair_runs(oracle_runs, proxy_runs)?;
    let k = oracle_runs[0].mixture.k();
    let uniform_w = uniform_mixture(k)?;
    let uniform = match uniform_run {
        Some(u) if u.mixture.approx_eq(&uniform_w, MATCH_TOLERANCE) => u,
        Some(_) => return Err(param_err("supplied uniform run is not the uniform mixture")),
        None => oracle_runs
            .iter()
            .find(|r| r.mixture.approx_eq(&uniform_w, MATCH_TOLERANCE))
            .ok_or_else(|| Error::Absence(format!("uniform mixture {}", uniform_w.to_json17())))?,
    };
    let mixtures: Vec<&MixtureWeights> = pairs.iter().map(|(o, _)| &o.mixture).collect();
    let mut rows = Vec::with_capacity(targets.len());
    for t in targets {
        let oracle: Vec<f64> = pairs.iter().map(|(o, _)| o.score(t)).collect::<Result<_>>()?;
        let proxy: Vec<f64> = pairs.iter().map(|(_, p)| p.score(t)).collect::<Result<_>>()?;
        let sel = argmax_mixture(&mixtures, &proxy).expect("nonempty");
        let best = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rows.push(SelectionRow {
            target: t.clone(),
            uniform: uniform.score(t)?,
            median: median(&mut oracle.clone()),
            selected: oracle[sel],
            best,
            selected_mixture: mixtures[sel].clone(),
        });
    }
    Ok(SelectionReport { rows })
}

/// `Best - Selected` for `target`.
pub fn regret(report: &SelectionReport, target: &Target) -> Result<f64> {
    report
        .row(target)
        .map(SelectionRow::regret)
        .ok_or_else(|| Error::Absence(format!("target '{target}' not in report")))
}
