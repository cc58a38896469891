//! Reports assembled from registry contents alone.

use super::registry::{Registry, RunKind};
use crate::error::{Error, Result};
use crate::evalx::{spearman, RunRecord, MATCH_TOLERANCE};
use crate::io::{csv_line, num, write_atomic, write_json_pretty};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportQuery {
    /// Restrict to experiments whose id starts with this prefix.
    pub experiment: Option<String>,
    pub proxy_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub experiment: String,
    pub proxy_budget: usize,
    pub oracle_budget: usize,
    pub mixtures: usize,
    pub spearman_average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub rows: usize,
    pub groups: Vec<GroupSummary>,
    pub warnings: Vec<String>,
}

/// Joins proxy and mixture-trained runs by experiment, budgets and mixture,
/// and writes `report/scatter.csv` and `report/correlation.json` under `out`.
/// Rows are sorted, so equal registry contents give byte-identical files
/// whatever order the entries were appended in.
pub fn report(out: &Path, query: &ReportQuery) -> Result<ReportOutcome> {
    if !out.join(super::registry::REGISTRY_FILE).exists() {
        return Err(Error::Absence(format!("no registry under {}", out.display())));
    }
    let reg = Registry::open(out)?;
    let keep = |exp: &str| query.experiment.as_ref().is_none_or(|p| exp.starts_with(p.as_str()));
    // experiment -> budget -> records
    let mut proxies: BTreeMap<&str, BTreeMap<usize, Vec<&RunRecord>>> = BTreeMap::new();
    let mut oracles: BTreeMap<&str, BTreeMap<usize, Vec<&RunRecord>>> = BTreeMap::new();
    for e in reg.entries() {
        if !keep(&e.experiment) {
            continue;
        }
        let target = match e.kind {
            RunKind::Proxy if query.proxy_budget.is_none_or(|b| b == e.record.budget) => &mut proxies,
            RunKind::Oracle => &mut oracles,
            _ => continue,
        };
        target.entry(&e.experiment).or_default().entry(e.record.budget).or_default().push(&e.record);
    }
    let mut scatter = String::from("experiment,proxy_budget,oracle_budget,mixture,proxy_average,oracle_average\n");
    let mut rows = 0;
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    let experiments: std::collections::BTreeSet<&str> = proxies.keys().chain(oracles.keys()).copied().collect();
    for exp in experiments {
        let empty = BTreeMap::new();
        let p_by = proxies.get(exp).unwrap_or(&empty);
        let o_by = oracles.get(exp).unwrap_or(&empty);
        let short = &exp[..12.min(exp.len())];
        for (&pb, prox) in p_by {
            for (&ob, orc) in o_by {
                let mut pairs: Vec<(&RunRecord, &RunRecord)> = prox
                    .iter()
                    .filter_map(|p| {
                        orc.iter().find(|o| o.mixture.approx_eq(&p.mixture, MATCH_TOLERANCE)).map(|o| (*p, *o))
                    })
                    .collect();
                pairs.sort_by(|a, b| a.0.mixture.lex_cmp(&b.0.mixture));
                for (p, o) in &pairs {
                    scatter.push_str(&csv_line(&[
                        short.to_string(),
                        pb.to_string(),
                        ob.to_string(),
                        p.mixture.to_json17(),
                        num(p.average),
                        num(o.average),
                    ]));
                }
                rows += pairs.len();
                let px: Vec<f64> = pairs.iter().map(|(p, _)| p.average).collect();
                let ox: Vec<f64> = pairs.iter().map(|(_, o)| o.average).collect();
                groups.push(GroupSummary {
                    experiment: short.to_string(),
                    proxy_budget: pb,
                    oracle_budget: ob,
                    mixtures: pairs.len(),
                    spearman_average: spearman(&px, &ox).ok(),
                });
            }
        }
        let mut orphans: Vec<String> = Vec::new();
        for prox in p_by.values() {
            for p in prox {
                if !o_by.values().flatten().any(|o| o.mixture.approx_eq(&p.mixture, MATCH_TOLERANCE)) {
                    orphans.push(format!("proxy {}", p.mixture.to_json17()));
                }
            }
        }
        for orc in o_by.values() {
            for o in orc {
                if !p_by.values().flatten().any(|p| p.mixture.approx_eq(&o.mixture, MATCH_TOLERANCE)) {
                    orphans.push(format!("oracle {}", o.mixture.to_json17()));
                }
            }
        }
        orphans.sort();
        orphans.dedup();
        if !orphans.is_empty() {
            warnings.push(format!("experiment {short}: unmatched runs: {}", orphans.join(", ")));
        }
    }
    if rows == 0 {
        warnings.push("empty report: no proxy run matched a mixture-trained run".into());
        return Ok(ReportOutcome { rows, groups, warnings });
    }
    let dir = out.join("report");
    write_atomic(&dir.join("scatter.csv"), scatter.as_bytes())?;
    write_json_pretty(&dir.join("correlation.json"), &groups)?;
    Ok(ReportOutcome { rows, groups, warnings })
}
