use clap::{Args, Parser, Subcommand, ValueEnum};
use mixmerge::baselines::{ComparisonProtocol, FeatureMap, RegressorSpec};
use mixmerge::io::{write_atomic, write_json_pretty};
use mixmerge::pipeline::{self, ExperimentConfig, Registry, ReportQuery, RunOptions};
use mixmerge::quadbed::{make_random_testbed, make_shared_hessian_testbed, theory_check};
use mixmerge::simplex::{enumerate_grid, mixtures_to_json, sample_dirichlet};
use mixmerge::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit code when a report query matches nothing.
const EMPTY_REPORT: u8 = 5;

#[derive(Parser)]
#[command(name = "mixmerge", version, about = "Rank data mixtures by merging per-domain experts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; holds the registry, checkpoints and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also train a model on every candidate mixture.
    #[arg(long, global = true)]
    oracle: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Linear,
    Quadratic,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in desk-scale config.
    Preset {
        #[arg(long, default_value_t = 3)]
        domains: usize,
    },
    /// Enumerate the simplex lattice with step 1/m.
    GenGrid {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        boundary: bool,
    },
    /// Draw mixtures from a symmetric Dirichlet.
    SampleMixtures {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
    },
    /// Train one expert per domain.
    TrainExperts,
    /// Train a model on every candidate mixture.
    TrainOracle,
    /// Score the merged proxy of every candidate and select the best.
    MergeEval,
    /// Rank correlation between proxies and mixture-trained models.
    Correlate,
    /// Selection table from runs already in the registry.
    Select,
    /// Proxies from experts trained with a smaller budget.
    CrossBudget {
        #[arg(long)]
        proxy_budget: Option<usize>,
    },
    /// Compare proxies with regressors fitted on mixture-trained runs.
    RegressCompare {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-6)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = MapArg::Quadratic)]
        feature_map: MapArg,
    },
    /// Linear merge versus the exact mixture optimum on quadratic testbeds.
    QuadTheory {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 10.0)]
        cap: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long)]
        shared: bool,
    },
    /// Loss along random directions around an expert.
    Probe {
        #[arg(long, default_value_t = 0)]
        domain: usize,
        #[arg(long, default_value_t = 1)]
        other: usize,
        #[arg(long, default_value_t = 5)]
        directions: usize,
        #[arg(long, default_value_t = 41)]
        alphas: usize,
    },
    /// Project mixture-trained models onto the plane of two experts.
    Project {
        #[arg(long, default_value_t = 0)]
        a: usize,
        #[arg(long, default_value_t = 1)]
        b: usize,
    },
    /// Scatter and correlation reports from the registry.
    Report {
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        proxy_budget: Option<usize>,
    },
    /// Delete mixture-trained checkpoints, keeping their records.
    Prune,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g.config.as_ref().ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    g.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))
}

fn opts(g: &Global, allow_training: bool) -> RunOptions {
    RunOptions { oracle: g.oracle, jobs: g.jobs, allow_training }
}

fn emit(g: &Global, name: &str, text: &str) -> Result<()> {
    match &g.out {
        Some(dir) => write_atomic(&dir.join(name), text.as_bytes()),
        None => print_text(text),
    }
}

fn print_text(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    print_text(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn experiment(g: &Global, allow_training: bool, oracle: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let out = out_dir(g, Some(&cfg))?;
    let res = pipeline::run_dmo_via_merging(&cfg, &out, &RunOptions { oracle, ..opts(g, allow_training) })?;
    eprintln!(
        "trained {} expert(s), {} oracle run(s), {} baseline run(s)",
        res.trainings.expert, res.trainings.oracle, res.trainings.baseline
    );
    print_json(&serde_json::json!({
        "experiment": res.experiment_id,
        "selected_mixture": res.selected,
        "correlation": res.correlation,
        "regret": res.average_regret(),
        "accounting": res.accounting,
    }))
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::Preset { domains } => {
            let mut cfg = ExperimentConfig::desk(g.seed.unwrap_or(0));
            if domains == 0 || domains > cfg.domains.len() {
                return Err(Error::Parameter(format!("the preset has 1..={} domains", cfg.domains.len())));
            }
            cfg.domains.truncate(domains);
            emit(g, "config.json", &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
        }
        Command::GenGrid { k, m, boundary } => {
            let grid = enumerate_grid(k, m, boundary)?;
            emit(g, "grid.json", &(grid.to_json() + "\n"))?;
        }
        Command::SampleMixtures { k, count, concentration } => {
            let mixes = sample_dirichlet(k, count, concentration, g.seed.unwrap_or(0))?;
            emit(g, "mixtures.json", &(mixtures_to_json(&mixes) + "\n"))?;
        }
        Command::TrainExperts => {
            let cfg = load_config(g)?;
            let (records, t) = pipeline::train_experts(&cfg, &out_dir(g, Some(&cfg))?, &opts(g, true))?;
            eprintln!("trained {} new expert(s)", t.expert);
            print_json(&records)?;
        }
        Command::TrainOracle => {
            let cfg = load_config(g)?;
            let (records, t) = pipeline::train_oracle(&cfg, &out_dir(g, Some(&cfg))?, &opts(g, true))?;
            eprintln!("trained {} new oracle run(s), {} baseline run(s)", t.oracle, t.baseline);
            print_json(&records)?;
        }
        Command::MergeEval => experiment(g, true, g.oracle)?,
        Command::Correlate => experiment(g, false, true)?,
        Command::Select => experiment(g, false, g.oracle)?,
        Command::CrossBudget { proxy_budget } => {
            let mut cfg = load_config(g)?;
            if proxy_budget.is_some() {
                cfg.proxy_budget = proxy_budget;
            }
            cfg.validate()?;
            let corr = pipeline::run_cross_budget(&cfg, &out_dir(g, Some(&cfg))?, &opts(g, true))?;
            print_json(&corr)?;
        }
        Command::RegressCompare { n, trials, lambda, feature_map } => {
            let cfg = load_config(g)?;
            let out = out_dir(g, Some(&cfg))?;
            let population = cfg.candidate_mixtures()?.len() + cfg.k();
            if population <= n {
                return Err(Error::Capacity(format!("{population} runs cannot supply n={n} plus a training set")));
            }
            let proto = ComparisonProtocol {
                eval_set_size: n,
                train_sizes: (1..=population - n).collect(),
                trials,
                seed: cfg.seed,
            };
            let spec = RegressorSpec {
                feature_map: match feature_map {
                    MapArg::Linear => FeatureMap::Linear,
                    MapArg::Quadratic => FeatureMap::Quadratic,
                },
                ridge_lambda: lambda,
            };
            let rep = pipeline::run_regress_compare(&cfg, &out, &spec, &proto, &opts(g, true))?;
            print_text(&rep.to_csv())?;
        }
        Command::QuadTheory { k, d, m, cap, spread, shared } => {
            let seed = g.seed.unwrap_or(0);
            let doms = if shared {
                make_shared_hessian_testbed(k, d, cap, spread, seed)?
            } else {
                make_random_testbed(k, d, cap, spread, seed)?
            };
            let rep = theory_check(&doms, &enumerate_grid(k, m, false)?)?;
            emit(g, "theory.csv", &rep.to_csv())?;
            eprintln!(
                "spearman {:?}, max loss gap {:e}, max gradient {:e}",
                rep.spearman,
                rep.max_gap,
                rep.max_grad_inf_norm()
            );
        }
        Command::Probe { domain, other, directions, alphas } => {
            let cfg = load_config(g)?;
            let out = out_dir(g, Some(&cfg))?;
            let curves = pipeline::run_probe(&cfg, &out, domain, other, directions, alphas, &opts(g, true))?;
            write_json_pretty(
                &out.join(format!("probe_{domain}.json")),
                &serde_json::json!({ "domain": domain, "other": other, "curves": curves }),
            )?;
            eprintln!("wrote {} probe curve(s)", curves.len());
        }
        Command::Project { a, b } => {
            let cfg = load_config(g)?;
            let (_, summary) = pipeline::run_project(&cfg, &out_dir(g, Some(&cfg))?, a, b, &opts(g, true))?;
            print_json(&summary)?;
        }
        Command::Report { experiment, proxy_budget } => {
            let cfg = g.config.as_ref().map(|_| load_config(g)).transpose()?;
            let out = out_dir(g, cfg.as_ref())?;
            let res = pipeline::report(&out, &ReportQuery { experiment, proxy_budget })?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            if res.rows == 0 {
                return Ok(EMPTY_REPORT);
            }
            print_json(&res.groups)?;
        }
        Command::Prune => {
            let cfg = g.config.as_ref().map(|_| load_config(g)).transpose()?;
            let out = out_dir(g, cfg.as_ref())?;
            if !Path::new(&out).join("registry.jsonl").exists() {
                return Err(Error::Absence(format!("no registry under {}", out.display())));
            }
            let removed = Registry::open(&out)?.prune()?;
            eprintln!("removed {removed} checkpoint(s)");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
