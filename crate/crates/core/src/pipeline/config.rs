use crate::error::{Error, Result};
use crate::simplex::{enumerate_grid, sample_dirichlet, MixtureWeights};
use crate::synth::{AssemblyMode, DomainSpec, Rotation};
use crate::train::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Where the candidate mixtures come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CandidateSpec {
    Grid {
        step_denominator: usize,
        #[serde(default)]
        include_boundary: bool,
    },
    Dirichlet {
        count: usize,
        concentration: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Held-out evaluation data: one benchmark per domain and optionally a
/// pooled set concatenating them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub heldout_size: usize,
    #[serde(default)]
    pub pooled: bool,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domains: Vec<DomainSpec>,
    /// Training budget `N` of every mixture-trained model.
    pub budget: usize,
    /// Budget of the experts; defaults to `budget`.
    #[serde(default)]
    pub proxy_budget: Option<usize>,
    pub candidates: CandidateSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub suite: SuiteSpec,
    pub seed: u64,
    #[serde(default)]
    pub assembly: AssemblyMode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn k(&self) -> usize {
        self.domains.len()
    }

    pub fn proxy_budget(&self) -> usize {
        self.proxy_budget.unwrap_or(self.budget)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(config_err("at least one domain is required"));
        }
        for d in &self.domains {
            d.validate().map_err(|e| config_err(e.to_string()))?;
        }
        let mut names: Vec<&str> = self.domains.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|p| p[0] == p[1]) {
            return Err(config_err("domain names must be unique"));
        }
        if names.contains(&"average") || (self.suite.pooled && names.contains(&"pooled")) {
            return Err(config_err("domain names 'average' and 'pooled' are reserved"));
        }
        self.model.validate().map_err(|e| config_err(e.to_string()))?;
        self.train.validate().map_err(|e| config_err(e.to_string()))?;
        let (d, c) = (self.model.architecture.input_dim(), self.model.architecture.num_classes());
        if self.domains.iter().any(|s| s.input_dim != d || s.num_classes != c) {
            return Err(config_err(format!("every domain must have input_dim {d} and {c} classes to match the model")));
        }
        if self.budget == 0 {
            return Err(config_err("budget must be >= 1"));
        }
        if let Some(p) = self.proxy_budget {
            if p == 0 || p > self.budget {
                return Err(config_err("proxy_budget must lie in [1, budget]"));
            }
        }
        if self.suite.heldout_size == 0 {
            return Err(config_err("suite heldout_size must be >= 1"));
        }
        if let Some(w) = &self.suite.weights {
            let n = self.k() + usize::from(self.suite.pooled);
            if w.len() != n {
                return Err(config_err(format!("suite weights need {n} entries")));
            }
        }
        self.candidate_mixtures().map_err(|e| match e {
            Error::Parameter(m) => config_err(m),
            other => other,
        })?;
        for s in &self.domains {
            if s.pool_size < self.budget {
                return Err(Error::Capacity(format!(
                    "domain '{}' pool of {} samples is smaller than budget N={}",
                    s.name, s.pool_size, self.budget
                )));
            }
        }
        Ok(())
    }

    pub fn candidate_mixtures(&self) -> Result<Vec<MixtureWeights>> {
        let k = self.k();
        match &self.candidates {
            CandidateSpec::Grid { step_denominator, include_boundary } => {
                Ok(enumerate_grid(k, *step_denominator, *include_boundary)?.mixtures)
            }
            CandidateSpec::Dirichlet { count, concentration, seed } => {
                sample_dirichlet(k, *count, *concentration, *seed)
            }
        }
    }

    /// The desk-scale K=3 experiment: 8 input features, 4 classes, domains
    /// that disagree partially on where each class lives.
    pub fn desk(seed: u64) -> Self {
        let centers: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let mut v = vec![0.0; 8];
                v[2 * c] = 1.0;
                v[2 * c + 1] = if c % 2 == 0 { 0.5 } else { -0.5 };
                v
            })
            .collect();
        let domain = |name: &str, angle: f64, noise: f64, shift: f64| DomainSpec {
            name: name.into(),
            input_dim: 8,
            num_classes: 4,
            centers: centers.clone(),
            noise_scale: noise,
            offset: Some((0..8).map(|i| if i % 2 == 0 { shift } else { -shift }).collect()),
            rotation: Some(Rotation { seed: 17, angle }),
            pool_size: 6000,
        };
        ExperimentConfig {
            domains: vec![
                domain("alpha", 0.0, 0.55, 0.0),
                domain("beta", 0.9, 0.65, 0.15),
                domain("gamma", -0.7, 0.75, -0.1),
            ],
            budget: 6000,
            proxy_budget: None,
            candidates: CandidateSpec::Grid { step_denominator: 8, include_boundary: false },
            model: ModelConfig::softmax_linear(8, 4),
            train: TrainConfig { epochs: 2, peak_lr: 0.01, ..TrainConfig::default() },
            suite: SuiteSpec { heldout_size: 2000, pooled: false, weights: None },
            seed,
            assembly: AssemblyMode::Apportioned,
            output_dir: None,
        }
    }

    /// The first two desk domains on the 7-point interior grid.
    pub fn desk_pair(seed: u64) -> Self {
        let mut cfg = Self::desk(seed);
        cfg.domains.truncate(2);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::desk(3);
        cfg.validate().unwrap();
        assert_eq!(cfg.candidate_mixtures().unwrap().len(), 21);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::desk(0);
        cfg.proxy_budget = Some(cfg.budget + 1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::desk(0);
        cfg.domains[1].name = "alpha".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::desk(0);
        cfg.domains[2].pool_size = 10;
        assert!(matches!(cfg.validate(), Err(Error::Capacity(_))));
        let mut cfg = ExperimentConfig::desk(0);
        cfg.candidates = CandidateSpec::Grid { step_denominator: 2, include_boundary: false };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"domains": []}"#), Err(Error::Json(_))));
    }
}
