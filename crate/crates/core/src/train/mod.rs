//! Desk-scale models and the optimizer loop that produces experts and
//! mixture-trained models.

mod model;
pub mod schedule;

pub use model::{gradient, loss, predict, Architecture};

use crate::error::{param_err, Error, Result};
use crate::params::ParamVector;
use crate::rng;
use crate::synth::SampleSet;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn softmax_linear(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            architecture: Architecture::SoftmaxLinear { input_dim, num_classes },
            init_seed: 0,
            init_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(param_err("init_scale must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Gaussian weights scaled by `init_scale`, zero biases.
pub fn init_model(cfg: &ModelConfig) -> Result<ParamVector> {
    cfg.validate()?;
    let arch = cfg.architecture;
    let mut rng = rng::stream(cfg.init_seed);
    let mut sample = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                cfg.init_scale * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect()
    };
    let values = match arch {
        Architecture::SoftmaxLinear { input_dim: d, num_classes: c } => {
            let mut v = sample(d * c);
            v.extend(std::iter::repeat_n(0.0, c));
            v
        }
        Architecture::OneHiddenLayerMlp { input_dim: d, hidden_dim: h, num_classes: c } => {
            let mut v = sample(h * d);
            v.extend(std::iter::repeat_n(0.0, h));
            v.extend(sample(c * h));
            v.extend(std::iter::repeat_n(0.0, c));
            v
        }
    };
    // `0 * x` can produce -0.0; normalize so a zero scale gives a true zero vector.
    let values = values.into_iter().map(|v| if v == 0.0 { 0.0 } else { v }).collect();
    ParamVector::new(values, arch.shape_tag())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    AdamwLike,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
}

fn default_log_interval() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 0.05,
            warmup_fraction: 0.1,
            schedule: Schedule::Cosine,
            batch_size: 64,
            epochs: 5,
            weight_decay: 0.01,
            optimizer: Optimizer::AdamwLike,
            seed: 0,
            log_interval: default_log_interval(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero peak rate is allowed and leaves the start point untouched.
        if !(self.peak_lr >= 0.0) || !self.peak_lr.is_finite() {
            return Err(param_err("peak_lr must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(param_err("warmup_fraction must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(param_err("batch_size and epochs must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(param_err("weight_decay must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size)
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state for one run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, n: usize) -> Self {
        OptimizerState { kind, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update. Weight decay is decoupled: `θ ← θ·(1 - lr·wd)` first, then
    /// the gradient-driven step.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        let shrink = 1.0 - lr * weight_decay;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in theta.iter_mut().zip(grad) {
                    *p *= shrink;
                    *p -= lr * g;
                }
            }
            Optimizer::AdamwLike => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t);
                let bc2 = 1.0 - BETA2.powi(self.t);
                for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p *= shrink;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub minibatch_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ParamVector,
    pub start_loss: f64,
    pub final_loss: f64,
    /// ∞-norm of the full-batch gradient at the returned parameters.
    pub final_grad_inf_norm: f64,
    pub log: Vec<LogRecord>,
}

impl TrainOutput {
    pub fn log_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.log {
            s.push_str(&serde_json::to_string(r).expect("log record serializes"));
            s.push('\n');
        }
        s
    }
}

/// Minibatch training from `start` on `data`.
pub fn train(start: &ParamVector, data: &SampleSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(param_err("training data is empty"));
    }
    let arch = Architecture::of(start)?;
    arch.check_data(data)?;
    let start_loss = loss(start, data)?;
    let n = data.len();
    let total = cfg.total_steps(n);
    let mut theta = start.values().to_vec();
    let mut grad = vec![0.0; theta.len()];
    let mut opt = OptimizerState::new(cfg.optimizer, theta.len());
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(rng::derive(cfg.seed, "epoch", &[epoch as u64]));
        let order = rng::permutation(&mut r, n);
        for batch in order.chunks(cfg.batch_size) {
            let mb_loss = model::loss_and_grad(&arch, &theta, data, batch, &mut grad);
            if !mb_loss.is_finite() {
                return Err(Error::Divergence { step, loss: mb_loss });
            }
            let lr = schedule::learning_rate(cfg, step, total);
            if cfg.log_interval > 0 && step % cfg.log_interval == 0 {
                log.push(LogRecord { step, lr, minibatch_loss: mb_loss });
            }
            opt.step(&mut theta, &grad, lr, cfg.weight_decay);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step, loss: f64::NAN });
            }
            step += 1;
        }
    }
    let params = start.with_values(theta)?;
    let final_loss = loss(&params, data)?;
    if final_loss > start_loss {
        return Err(Error::Numeric(format!(
            "training increased the full-batch loss from {start_loss} to {final_loss}"
        )));
    }
    let g = gradient(&params, data)?;
    let final_grad_inf_norm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(TrainOutput { params, start_loss, final_loss, final_grad_inf_norm, log })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub coordinates: Vec<usize>,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
/// Denominator floor so near-zero gradients compare on an absolute scale.
const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Central finite differences on at least 20 random coordinates (all of them
/// for small models).
pub fn grad_check(model: &ParamVector, data: &SampleSet) -> Result<GradCheckReport> {
    grad_check_with(model, data, 20, 0)
}

pub fn grad_check_with(model: &ParamVector, data: &SampleSet, min_coords: usize, seed: u64) -> Result<GradCheckReport> {
    if data.is_empty() {
        return Err(param_err("grad check needs data"));
    }
    let analytic = gradient(model, data)?;
    let n = model.len();
    let mut coordinates = if n <= min_coords {
        (0..n).collect::<Vec<_>>()
    } else {
        let mut r = rng::stream(seed);
        let mut p = rng::permutation(&mut r, n);
        p.truncate(min_coords);
        p
    };
    coordinates.sort_unstable();
    let mut worst = 0.0_f64;
    let mut probe = model.values().to_vec();
    for &j in &coordinates {
        let orig = probe[j];
        probe[j] = orig + GRAD_CHECK_STEP;
        let up = loss(&model.with_values(probe.clone())?, data)?;
        probe[j] = orig - GRAD_CHECK_STEP;
        let down = loss(&model.with_values(probe.clone())?, data)?;
        probe[j] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let denom = analytic[j].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(GradCheckReport { coordinates, max_rel_error: worst, passed: worst <= GRAD_CHECK_TOLERANCE })
}
