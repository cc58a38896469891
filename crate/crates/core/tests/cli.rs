use mixmerge::pipeline::ExperimentConfig;
use std::path::Path;
use std::process::{Command, Output};

fn mixmerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixmerge")).args(args).output().expect("spawn mixmerge")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_pair(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::desk_pair(4);
    for d in &mut cfg.domains {
        d.pool_size = 1500;
    }
    cfg.budget = 1500;
    cfg.suite.heldout_size = 400;
    let path = dir.join("pair.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn grid_and_samples_print_json() {
    let o = mixmerge(&["gen-grid", "--k", "3", "--m", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mixtures"].as_array().unwrap().len(), 21);

    let o = mixmerge(&["sample-mixtures", "--k", "4", "--count", "5", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, mixmerge(&["sample-mixtures", "--k", "4", "--count", "5", "--seed", "3"]).stdout);
}

#[test]
fn invalid_arguments_exit_with_code_two() {
    assert_eq!(code(&mixmerge(&["gen-grid", "--k", "3", "--m", "2"])), 2);
    assert_eq!(code(&mixmerge(&["sample-mixtures", "--k", "3", "--count", "2", "--concentration", "-1"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let o = mixmerge(&["merge-eval", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error: "));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"domains": [], "unknown": 1}"#).unwrap();
    assert_eq!(code(&mixmerge(&["train-experts", "--config", bad.to_str().unwrap(), "--out", "x"])), 2);
}

#[test]
fn capacity_and_absence_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::desk_pair(0);
    cfg.domains[0].pool_size = 100;
    let path = dir.path().join("small.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("o");
    let o = mixmerge(&["train-experts", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let empty = dir.path().join("empty");
    assert_eq!(code(&mixmerge(&["report", "--out", empty.to_str().unwrap()])), 3);
}

#[test]
fn quad_theory_reports_exact_ranking_for_shared_hessians() {
    let o = mixmerge(&["quad-theory", "--k", "3", "--d", "8", "--shared", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("spearman Some(1.0)"), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("mixture,grad_inf_norm,loss_gap,proxy_loss,oracle_loss\n"));
    assert_eq!(csv.lines().count(), 1 + 21);
}

#[test]
fn workflow_from_experts_to_report_and_prune() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pair(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", cfg.as_str(), "--out", out];
        all.extend_from_slice(args);
        mixmerge(&all)
    };

    // Selection needs mixture-trained runs that do not exist yet.
    assert_eq!(code(&run(&["select"])), 3);

    let o = run(&["train-experts"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["merge-eval"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(Path::new(out).join("proxy.csv").exists());
    assert!(!Path::new(out).join("oracle.csv").exists());

    // Nothing to pair yet: an empty report is its own outcome.
    assert_eq!(code(&run(&["report"])), 5);

    let o = run(&["--jobs", "2", "train-oracle"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["correlate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["select"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(Path::new(out).join("selection.csv").exists());
    let o = run(&["report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scatter = std::fs::read_to_string(Path::new(out).join("report/scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + 7);

    let o = run(&["project"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["prune"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Projections need the pruned checkpoints; selection only needs records.
    assert_eq!(code(&run(&["project"])), 3);
    assert_eq!(code(&run(&["select"])), 0);
}
