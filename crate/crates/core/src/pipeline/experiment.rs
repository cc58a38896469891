use super::config::ExperimentConfig;
use super::registry::{run_key, sha256_hex, Entry, Registry, RunKind};
use crate::baselines::{compare_protocol, ComparisonProtocol, CurveReport, RegressorSpec};
use crate::error::{Error, Result};
use crate::evalx::{
    argmax_mixture, evaluate, selection_table, spearman, Benchmark, BenchmarkSuite, Provenance, RunRecord,
    SelectionReport, Target, MATCH_TOLERANCE,
};
use crate::io::{csv_line, num, write_atomic, write_json_pretty};
use crate::landscape::{
    line_alignment_score, probe_curves_csv, probe_loss, probe_plot_data, project_to_expert_plane, projection_plot_data,
    ProbeCurve, ProbeTarget,
};
use crate::params::{merge_linear, ExpertSet, ParamVector};
use crate::rng;
use crate::simplex::{uniform_mixture, MixtureWeights};
use crate::synth::{assemble_mixture, build_domain_pool, SampleSet};
use crate::train::{init_model, train, ModelConfig, TrainConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Also train a model on every candidate mixture.
    pub oracle: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// When false, missing training runs are an error instead of being trained.
    pub allow_training: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { oracle: false, jobs: None, allow_training: true }
    }
}

pub(crate) fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn mixture_bits(w: &MixtureWeights) -> Vec<u64> {
    w.weights().iter().map(|x| x.to_bits()).collect()
}

/// Everything derived deterministically from a config: domain pools,
/// held-out suite, the shared starting point and the candidate set.
#[derive(Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    /// Hash of every setting that affects an individual run.
    pub id: String,
    pub pools: Vec<SampleSet>,
    pub suite: BenchmarkSuite,
    pub theta0: ParamVector,
    pub candidates: Vec<MixtureWeights>,
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    domains: &'a [crate::synth::DomainSpec],
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    suite: &'a super::config::SuiteSpec,
    seed: u64,
    assembly: crate::synth::AssemblyMode,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let fp = Fingerprint {
            domains: &cfg.domains,
            model: &cfg.model,
            train: &cfg.train,
            suite: &cfg.suite,
            seed: cfg.seed,
            assembly: cfg.assembly,
        };
        let id = sha256_hex(serde_json::to_string(&fp)?.as_bytes());
        let pools = cfg
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| build_domain_pool(d, rng::derive(cfg.seed, "pool", &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        let mut benchmarks = Vec::new();
        for (i, d) in cfg.domains.iter().enumerate() {
            let spec = crate::synth::DomainSpec { pool_size: cfg.suite.heldout_size, ..d.clone() };
            let data = build_domain_pool(&spec, rng::derive(cfg.seed, "heldout", &[i as u64]))?;
            benchmarks.push(Benchmark { name: d.name.clone(), data });
        }
        if cfg.suite.pooled {
            let parts: Vec<&SampleSet> = benchmarks.iter().map(|b| &b.data).collect();
            let dim = parts[0].dim();
            let mut features = Vec::new();
            let mut labels = Vec::new();
            let mut tags = Vec::new();
            for (i, p) in parts.iter().enumerate() {
                for j in 0..p.len() {
                    features.extend_from_slice(p.input(j));
                    labels.push(p.label(j));
                    tags.push(i);
                }
            }
            let data = SampleSet::new(dim, features, labels, tags, cfg.seed)?;
            benchmarks.push(Benchmark { name: "pooled".into(), data });
        }
        let suite = BenchmarkSuite::new(benchmarks, cfg.suite.weights.clone())?;
        let model =
            ModelConfig { init_seed: rng::derive(cfg.seed, "init", &[cfg.model.init_seed]), ..cfg.model.clone() };
        let theta0 = init_model(&model)?;
        let candidates = cfg.candidate_mixtures()?;
        Ok(Experiment { cfg: cfg.clone(), id, pools, suite, theta0, candidates })
    }

    pub fn k(&self) -> usize {
        self.cfg.k()
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.cfg.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Target> {
        let mut t: Vec<Target> = self.suite.names().into_iter().map(Target::Benchmark).collect();
        t.push(Target::Average);
        t
    }

    pub fn vertices(&self) -> Vec<MixtureWeights> {
        (0..self.k()).map(|i| MixtureWeights::vertex(self.k(), i).expect("valid vertex")).collect()
    }

    /// `D_w(budget)`.
    pub fn mixture_data(&self, w: &MixtureWeights, budget: usize) -> Result<SampleSet> {
        let seed = rng::derive(self.cfg.seed, "assemble", &mixture_bits(w));
        assemble_mixture(&self.pools, w, budget, seed, self.cfg.assembly)
    }

    fn train_config(&self, w: &MixtureWeights) -> TrainConfig {
        let mut idx = vec![self.cfg.train.seed];
        idx.extend(mixture_bits(w));
        TrainConfig { seed: rng::derive(self.cfg.seed, "train", &idx), ..self.cfg.train.clone() }
    }

    /// Trains from the shared starting point on `D_w(budget)`.
    pub fn train_on(&self, w: &MixtureWeights, budget: usize) -> Result<crate::train::TrainOutput> {
        let data = self.mixture_data(w, budget)?;
        train(&self.theta0, &data, &self.train_config(w))
    }
}

/// New training runs performed by one call.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Trainings {
    pub expert: usize,
    pub oracle: usize,
    pub baseline: usize,
}

impl Trainings {
    pub fn total(&self) -> usize {
        self.expert + self.oracle + self.baseline
    }
}

#[derive(Default)]
struct Counter {
    expert: AtomicUsize,
    oracle: AtomicUsize,
    baseline: AtomicUsize,
}

impl Counter {
    fn bump(&self, kind: RunKind) {
        let c = match kind {
            RunKind::Expert => &self.expert,
            RunKind::Oracle => &self.oracle,
            RunKind::Baseline => &self.baseline,
            RunKind::Proxy => return,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> Trainings {
        Trainings {
            expert: self.expert.load(Ordering::Relaxed),
            oracle: self.oracle.load(Ordering::Relaxed),
            baseline: self.baseline.load(Ordering::Relaxed),
        }
    }
}

/// Returns one registry entry per mixture (in order), training the missing ones.
fn ensure_trained(
    exp: &Experiment,
    reg: &mut Registry,
    kind: RunKind,
    mixtures: &[MixtureWeights],
    budget: usize,
    opts: &RunOptions,
    counter: &Counter,
) -> Result<Vec<Entry>> {
    let keys: Vec<String> = mixtures.iter().map(|w| run_key(&exp.id, kind, w, budget)).collect();
    let missing: Vec<(String, MixtureWeights)> =
        keys.iter().zip(mixtures).filter(|(k, _)| reg.get(k).is_none()).map(|(k, w)| (k.clone(), w.clone())).collect();
    if !missing.is_empty() && !opts.allow_training {
        return Err(Error::Absence(format!(
            "{} {kind:?} run(s) not in the registry, first {}",
            missing.len(),
            missing[0].1.to_json17()
        )));
    }
    let ckpt_dir = reg.root().join(super::registry::CHECKPOINT_DIR);
    reg.run_jobs(&missing, |(key, w)| {
        let out = exp.train_on(w, budget)?;
        counter.bump(kind);
        let name = format!("{key}.bin");
        let provenance = serde_json::json!({
            "experiment": exp.id,
            "kind": kind,
            "mixture": w.weights(),
            "budget": budget,
            "start_loss": out.start_loss,
            "final_loss": out.final_loss,
            "final_grad_inf_norm": out.final_grad_inf_norm,
        });
        out.params.save(&ckpt_dir.join(&name), &provenance)?;
        let scores = evaluate(&out.params, &exp.suite)?;
        Ok(Entry {
            key: key.clone(),
            experiment: exp.id.clone(),
            kind,
            record: RunRecord::new(w.clone(), Provenance::Trained, budget, scores, exp.cfg.seed),
            checkpoint: Some(name),
        })
    })?;
    Ok(keys.iter().map(|k| reg.get(k).expect("entry present after training").clone()).collect())
}

fn ensure_proxies(
    exp: &Experiment,
    reg: &mut Registry,
    experts: &ExpertSet,
    mixtures: &[MixtureWeights],
    budget: usize,
) -> Result<Vec<RunRecord>> {
    let keys: Vec<String> = mixtures.iter().map(|w| run_key(&exp.id, RunKind::Proxy, w, budget)).collect();
    let missing: Vec<(String, MixtureWeights)> =
        keys.iter().zip(mixtures).filter(|(k, _)| reg.get(k).is_none()).map(|(k, w)| (k.clone(), w.clone())).collect();
    reg.run_jobs(&missing, |(key, w)| {
        let merged = merge_linear(experts, w)?;
        let scores = evaluate(&merged, &exp.suite)?;
        Ok(Entry {
            key: key.clone(),
            experiment: exp.id.clone(),
            kind: RunKind::Proxy,
            record: RunRecord::new(w.clone(), Provenance::MergedProxy, budget, scores, exp.cfg.seed),
            checkpoint: None,
        })
    })?;
    Ok(keys.iter().map(|k| reg.get(k).expect("proxy present").record.clone()).collect())
}

fn load_experts(exp: &Experiment, reg: &Registry, entries: &[Entry]) -> Result<ExpertSet> {
    let params = entries.iter().map(|e| reg.load_checkpoint(e)).collect::<Result<Vec<_>>>()?;
    ExpertSet::new(exp.theta0.clone(), params, exp.domain_names())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub budget: usize,
    pub proxy_budget: usize,
    pub mixtures: usize,
    /// `None` when a score column is constant.
    pub average: Option<f64>,
    pub per_benchmark: BTreeMap<String, Option<f64>>,
}

fn correlation(
    exp: &Experiment,
    proxy: &[RunRecord],
    oracle: &[RunRecord],
    proxy_budget: usize,
) -> Result<CorrelationSummary> {
    let col = |runs: &[RunRecord], t: &Target| runs.iter().map(|r| r.score(t)).collect::<Result<Vec<_>>>();
    let rho = |t: &Target| -> Result<Option<f64>> {
        match spearman(&col(proxy, t)?, &col(oracle, t)?) {
            Ok(r) => Ok(Some(r)),
            Err(Error::UndefinedCorrelation(_)) | Err(Error::Parameter(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut per_benchmark = BTreeMap::new();
    for name in exp.suite.names() {
        per_benchmark.insert(name.clone(), rho(&Target::Benchmark(name))?);
    }
    Ok(CorrelationSummary {
        budget: exp.cfg.budget,
        proxy_budget,
        mixtures: proxy.len(),
        average: rho(&Target::Average)?,
        per_benchmark,
    })
}

/// Distinct training runs behind a result, by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Accounting {
    pub expert_runs: usize,
    pub oracle_runs: usize,
    pub baseline_runs: usize,
    pub proxy_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct DmoOutcome {
    pub experiment_id: String,
    pub experts: Vec<RunRecord>,
    pub proxy_runs: Vec<RunRecord>,
    pub selected: MixtureWeights,
    pub oracle_runs: Option<Vec<RunRecord>>,
    pub uniform_run: Option<RunRecord>,
    pub correlation: Option<CorrelationSummary>,
    pub selection: Option<SelectionReport>,
    pub accounting: Accounting,
    pub trainings: Trainings,
}

impl DmoOutcome {
    pub fn average_regret(&self) -> Option<f64> {
        self.selection.as_ref().and_then(|s| s.row(&Target::Average)).map(|r| r.regret())
    }
}

fn records_csv(names: &[String], runs: &[RunRecord]) -> String {
    let mut header = vec!["mixture".to_string(), "budget".to_string()];
    header.extend(names.iter().cloned());
    header.push("average".into());
    let mut out = csv_line(&header);
    for r in runs {
        let mut row = vec![r.mixture.to_json17(), r.budget.to_string()];
        row.extend(names.iter().map(|n| num(r.scores[n])));
        row.push(num(r.average));
        out.push_str(&csv_line(&row));
    }
    out
}

fn scatter_csv(proxy: &[RunRecord], oracle: &[RunRecord]) -> String {
    let mut out = String::from("mixture,proxy_average,oracle_average\n");
    for (p, o) in proxy.iter().zip(oracle) {
        out.push_str(&csv_line(&[p.mixture.to_json17(), num(p.average), num(o.average)]));
    }
    out
}

/// Trains the experts (at the proxy budget), scores the merged proxy of every
/// candidate and, in oracle mode, trains and scores a model per candidate.
pub fn run_dmo_via_merging(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<DmoOutcome> {
    let exp = Experiment::prepare(cfg)?;
    with_jobs(opts.jobs, || dmo_inner(&exp, out, opts))?
}

fn dmo_inner(exp: &Experiment, out: &Path, opts: &RunOptions) -> Result<DmoOutcome> {
    let mut reg = Registry::open(out)?;
    let counter = Counter::default();
    let pb = exp.cfg.proxy_budget();
    let expert_entries = ensure_trained(exp, &mut reg, RunKind::Expert, &exp.vertices(), pb, opts, &counter)?;
    let experts = load_experts(exp, &reg, &expert_entries)?;
    let proxy_runs = ensure_proxies(exp, &mut reg, &experts, &exp.candidates, pb)?;
    let mixtures: Vec<&MixtureWeights> = proxy_runs.iter().map(|r| &r.mixture).collect();
    let proxy_avg: Vec<f64> = proxy_runs.iter().map(|r| r.average).collect();
    let selected = mixtures[argmax_mixture(&mixtures, &proxy_avg).expect("nonempty candidates")].clone();
    let names = exp.suite.names();
    write_atomic(&out.join("proxy.csv"), records_csv(&names, &proxy_runs).as_bytes())?;
    write_json_pretty(
        &out.join("selected.json"),
        &serde_json::json!({ "selected_mixture": selected, "proxy_average": proxy_avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max) }),
    )?;
    let mut accounting = Accounting {
        expert_runs: expert_entries.len(),
        oracle_runs: 0,
        baseline_runs: 0,
        proxy_evaluations: proxy_runs.len(),
    };
    let mut outcome = DmoOutcome {
        experiment_id: exp.id.clone(),
        experts: expert_entries.iter().map(|e| e.record.clone()).collect(),
        proxy_runs,
        selected,
        oracle_runs: None,
        uniform_run: None,
        correlation: None,
        selection: None,
        accounting,
        trainings: Trainings::default(),
    };
    if opts.oracle {
        let budget = exp.cfg.budget;
        let oracle_entries = ensure_trained(exp, &mut reg, RunKind::Oracle, &exp.candidates, budget, opts, &counter)?;
        let oracle: Vec<RunRecord> = oracle_entries.iter().map(|e| e.record.clone()).collect();
        let uniform = uniform_mixture(exp.k())?;
        let uniform_run = if exp.candidates.iter().any(|w| w.approx_eq(&uniform, MATCH_TOLERANCE)) {
            None
        } else {
            let e = ensure_trained(exp, &mut reg, RunKind::Baseline, &[uniform], budget, opts, &counter)?;
            Some(e[0].record.clone())
        };
        accounting.oracle_runs = oracle.len();
        accounting.baseline_runs = usize::from(uniform_run.is_some());
        let corr = correlation(exp, &outcome.proxy_runs, &oracle, exp.cfg.proxy_budget())?;
        let sel = selection_table(&oracle, &outcome.proxy_runs, &exp.targets(), uniform_run.as_ref())?;
        write_atomic(&out.join("oracle.csv"), records_csv(&names, &oracle).as_bytes())?;
        write_atomic(&out.join("scatter.csv"), scatter_csv(&outcome.proxy_runs, &oracle).as_bytes())?;
        write_atomic(&out.join("selection.csv"), sel.to_csv().as_bytes())?;
        write_json_pretty(
            &out.join("correlation.json"),
            &serde_json::json!({ "correlation": corr, "accounting": accounting }),
        )?;
        outcome.oracle_runs = Some(oracle);
        outcome.uniform_run = uniform_run;
        outcome.correlation = Some(corr);
        outcome.selection = Some(sel);
        outcome.accounting = accounting;
    }
    outcome.trainings = counter.snapshot();
    Ok(outcome)
}

/// Trains experts only.
pub fn train_experts(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<(Vec<RunRecord>, Trainings)> {
    let exp = Experiment::prepare(cfg)?;
    with_jobs(opts.jobs, || {
        let mut reg = Registry::open(out)?;
        let counter = Counter::default();
        let e = ensure_trained(&exp, &mut reg, RunKind::Expert, &exp.vertices(), cfg.proxy_budget(), opts, &counter)?;
        Ok((e.into_iter().map(|e| e.record).collect(), counter.snapshot()))
    })?
}

/// Trains the mixture models (and the uniform baseline when it is not a
/// candidate) only.
pub fn train_oracle(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<(Vec<RunRecord>, Trainings)> {
    let exp = Experiment::prepare(cfg)?;
    with_jobs(opts.jobs, || {
        let mut reg = Registry::open(out)?;
        let counter = Counter::default();
        let e = ensure_trained(&exp, &mut reg, RunKind::Oracle, &exp.candidates, cfg.budget, opts, &counter)?;
        let uniform = uniform_mixture(exp.k())?;
        if !exp.candidates.iter().any(|w| w.approx_eq(&uniform, MATCH_TOLERANCE)) {
            ensure_trained(&exp, &mut reg, RunKind::Baseline, &[uniform], cfg.budget, opts, &counter)?;
        }
        Ok((e.into_iter().map(|e| e.record).collect(), counter.snapshot()))
    })?
}

/// Spearman between proxies built from reduced-budget experts and the
/// full-budget oracle.
pub fn run_cross_budget(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<CorrelationSummary> {
    match cfg.proxy_budget {
        Some(p) if p <= cfg.budget => {}
        _ => return Err(Error::Config("cross-budget needs proxy_budget <= budget".into())),
    }
    let res = run_dmo_via_merging(cfg, out, &RunOptions { oracle: true, ..*opts })?;
    let corr = res.correlation.expect("oracle mode yields a correlation");
    write_json_pretty(&out.join(format!("cross_budget_{}.json", cfg.proxy_budget())), &corr)?;
    Ok(corr)
}

/// Fit-and-rank comparison on the population of trained models: every
/// candidate's oracle run plus the experts (vertex mixtures at the full budget).
pub fn run_regress_compare(
    cfg: &ExperimentConfig,
    out: &Path,
    spec: &RegressorSpec,
    proto: &ComparisonProtocol,
    opts: &RunOptions,
) -> Result<CurveReport> {
    if cfg.proxy_budget() != cfg.budget {
        return Err(Error::Config("regression comparison needs experts at the full budget".into()));
    }
    let res = run_dmo_via_merging(cfg, out, &RunOptions { oracle: true, ..*opts })?;
    let mut population = res.oracle_runs.expect("oracle mode");
    let mut proxies = res.proxy_runs.clone();
    for e in &res.experts {
        if !population.iter().any(|r| r.mixture.approx_eq(&e.mixture, MATCH_TOLERANCE)) {
            population.push(e.clone());
            proxies.push(RunRecord { provenance: Provenance::MergedProxy, ..e.clone() });
        }
    }
    let report = with_jobs(opts.jobs, || compare_protocol(&population, &proxies, spec, proto))??;
    write_atomic(&out.join("curve.csv"), report.to_csv().as_bytes())?;
    write_json_pretty(
        &out.join("curve.json"),
        &serde_json::json!({
            "regressor": spec,
            "protocol": proto,
            "population": population.len(),
            "proxy_cost_runs": res.experts.len(),
            "rows": report.rows,
        }),
    )?;
    Ok(report)
}

/// Probe curves around expert `domain` using its own training set, scaled by
/// the distance to expert `other`.
pub fn run_probe(
    cfg: &ExperimentConfig,
    out: &Path,
    domain: usize,
    other: usize,
    num_directions: usize,
    num_alphas: usize,
    opts: &RunOptions,
) -> Result<Vec<ProbeCurve>> {
    let exp = Experiment::prepare(cfg)?;
    if domain >= exp.k() || other >= exp.k() || domain == other {
        return Err(Error::Parameter(format!("domains {domain} and {other} must be distinct and < {}", exp.k())));
    }
    let curves = with_jobs(opts.jobs, || -> Result<Vec<ProbeCurve>> {
        let mut reg = Registry::open(out)?;
        let counter = Counter::default();
        let pb = cfg.proxy_budget();
        let entries = ensure_trained(&exp, &mut reg, RunKind::Expert, &exp.vertices(), pb, opts, &counter)?;
        let experts = load_experts(&exp, &reg, &entries)?;
        let data = exp.mixture_data(&exp.vertices()[domain], pb)?;
        let seed = rng::derive(cfg.seed, "probe", &[domain as u64, other as u64]);
        probe_loss(
            &experts.experts()[domain],
            &experts.experts()[other],
            ProbeTarget::Data(&data),
            num_directions,
            num_alphas,
            seed,
        )
    })??;
    write_atomic(&out.join(format!("probe_{domain}.csv")), probe_curves_csv(&curves).as_bytes())?;
    write_json_pretty(&out.join(format!("probe_{domain}_plot.json")), &probe_plot_data(&curves))?;
    Ok(curves)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSummary {
    pub alignment_score: Option<f64>,
    pub max_residual_norm: f64,
    pub points: usize,
}

/// Projects the oracle models onto the plane of experts `a` and `b`,
/// centered at the shared starting point.
pub fn run_project(
    cfg: &ExperimentConfig,
    out: &Path,
    a: usize,
    b: usize,
    opts: &RunOptions,
) -> Result<(crate::landscape::PlaneProjection, ProjectionSummary)> {
    let exp = Experiment::prepare(cfg)?;
    if a >= exp.k() || b >= exp.k() || a == b {
        return Err(Error::Parameter(format!("experts {a} and {b} must be distinct and < {}", exp.k())));
    }
    let proj = with_jobs(opts.jobs, || -> Result<_> {
        let mut reg = Registry::open(out)?;
        let counter = Counter::default();
        let entries =
            ensure_trained(&exp, &mut reg, RunKind::Expert, &exp.vertices(), cfg.proxy_budget(), opts, &counter)?;
        let experts = load_experts(&exp, &reg, &entries)?;
        let oracle = ensure_trained(&exp, &mut reg, RunKind::Oracle, &exp.candidates, cfg.budget, opts, &counter)?;
        let models = oracle
            .iter()
            .map(|e| Ok((e.record.mixture.clone(), reg.load_checkpoint(e)?)))
            .collect::<Result<Vec<_>>>()?;
        project_to_expert_plane(&exp.theta0, &experts.experts()[a], &experts.experts()[b], &models)
    })??;
    let summary = ProjectionSummary {
        alignment_score: line_alignment_score(&proj).ok(),
        max_residual_norm: proj.points.iter().map(|p| p.residual_norm).fold(0.0, f64::max),
        points: proj.points.len(),
    };
    write_atomic(&out.join("projection.csv"), proj.to_csv().as_bytes())?;
    write_json_pretty(&out.join("projection_plot.json"), &projection_plot_data(&proj))?;
    write_json_pretty(&out.join("projection.json"), &summary)?;
    Ok((proj, summary))
}
