//! Append-only run registry: one JSONL file plus per-run checkpoints.
//!
//! Entries are keyed by a content hash of the experiment fingerprint, run
//! kind, mixture and budget. A key is written at most once; a rerun of the
//! same experiment finds its runs by key and skips them.

use crate::error::{Error, Result};
use crate::evalx::RunRecord;
use crate::params::ParamVector;
use crate::simplex::MixtureWeights;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    /// Trained on a single domain; merged into proxies.
    Expert,
    /// Trained on a candidate mixture.
    Oracle,
    /// Trained on the uniform mixture when it is not a candidate.
    Baseline,
    /// Merged-proxy evaluation; no training.
    Proxy,
}

impl RunKind {
    pub fn is_training(self) -> bool {
        self != RunKind::Proxy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub key: String,
    pub experiment: String,
    pub kind: RunKind,
    pub record: RunRecord,
    /// Checkpoint file name under `checkpoints/`.
    pub checkpoint: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn run_key(experiment: &str, kind: RunKind, mixture: &MixtureWeights, budget: usize) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        experiment: &'a str,
        kind: RunKind,
        mixture_bits: Vec<String>,
        budget: usize,
    }
    let m = KeyMaterial {
        experiment,
        kind,
        mixture_bits: mixture.weights().iter().map(|w| format!("{:016x}", w.to_bits())).collect(),
        budget,
    };
    sha256_hex(serde_json::to_string(&m).expect("key material serializes").as_bytes())
}

pub const REGISTRY_FILE: &str = "registry.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl Registry {
    /// Opens (creating if needed) the registry under `root`. A trailing
    /// partial line left by an interrupted write is discarded.
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root.join(CHECKPOINT_DIR))?;
        let path = root.join(REGISTRY_FILE);
        let mut reg = Registry { root: root.to_path_buf(), entries: Vec::new(), index: HashMap::new() };
        if !path.exists() {
            return Ok(reg);
        }
        let bytes = std::fs::read(&path)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        if complete < bytes.len() {
            let f = std::fs::OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete as u64)?;
        }
        for (lineno, line) in bytes[..complete].lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(&line)
                .map_err(|err| Error::Format(format!("{}:{}: {err}", path.display(), lineno + 1)))?;
            reg.insert(e);
        }
        Ok(reg)
    }

    fn insert(&mut self, e: Entry) {
        if !self.index.contains_key(&e.key) {
            self.index.insert(e.key.clone(), self.entries.len());
            self.entries.push(e);
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    pub fn count(&self, experiment: &str, kind: RunKind) -> usize {
        self.entries.iter().filter(|e| e.experiment == experiment && e.kind == kind).count()
    }

    pub fn checkpoint_path(&self, key: &str) -> PathBuf {
        self.root.join(CHECKPOINT_DIR).join(format!("{key}.bin"))
    }

    pub fn load_checkpoint(&self, entry: &Entry) -> Result<ParamVector> {
        let name =
            entry.checkpoint.as_ref().ok_or_else(|| Error::Absence(format!("run {} has no checkpoint", entry.key)))?;
        let path = self.root.join(CHECKPOINT_DIR).join(name);
        if !path.exists() {
            return Err(Error::Absence(format!("checkpoint {} was pruned or is missing", path.display())));
        }
        ParamVector::load(&path)
    }

    /// Runs `work` for every job in parallel. Workers write their own
    /// checkpoints; registry lines go through a single appender thread in
    /// completion order. Entries finished before a failure stay recorded.
    pub fn run_jobs<J, F>(&mut self, jobs: &[J], work: F) -> Result<Vec<Entry>>
    where
        J: Sync,
        F: Fn(&J) -> Result<Entry> + Sync,
    {
        let path = self.root.join(REGISTRY_FILE);
        let (tx, rx) = mpsc::channel::<Entry>();
        let results: Vec<Result<Entry>> = std::thread::scope(|s| {
            let writer = s.spawn(move || -> Result<()> {
                let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
                for e in rx {
                    let mut line = serde_json::to_string(&e)?;
                    line.push('\n');
                    f.write_all(line.as_bytes())?;
                    f.flush()?;
                }
                f.sync_all()?;
                Ok(())
            });
            let results: Vec<Result<Entry>> = jobs
                .par_iter()
                .map_with(tx, |tx, job| {
                    let e = work(job)?;
                    tx.send(e.clone()).map_err(|_| Error::Io(std::io::Error::other("registry writer stopped")))?;
                    Ok(e)
                })
                .collect();
            match writer.join() {
                Ok(Ok(())) => results,
                Ok(Err(e)) => vec![Err(e)],
                Err(_) => vec![Err(Error::Io(std::io::Error::other("registry writer panicked")))],
            }
        });
        let mut out = Vec::with_capacity(results.len());
        let mut first_err = None;
        for r in results {
            match r {
                Ok(e) => {
                    self.insert(e.clone());
                    out.push(e);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Deletes oracle and baseline checkpoints; records are kept.
    pub fn prune(&self) -> Result<usize> {
        let mut removed = 0;
        for e in &self.entries {
            if matches!(e.kind, RunKind::Oracle | RunKind::Baseline) {
                if let Some(name) = &e.checkpoint {
                    let p = self.root.join(CHECKPOINT_DIR).join(name);
                    if p.exists() {
                        std::fs::remove_file(&p)?;
                        let side = crate::params::sidecar_path(&p);
                        if side.exists() {
                            std::fs::remove_file(side)?;
                        }
                        removed += 1;
                    }
                }
            }
        }
        Ok(removed)
    }
}
