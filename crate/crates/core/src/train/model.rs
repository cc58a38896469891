//! Forward and backward passes for the two desk-scale architectures.

use crate::error::{param_err, shape_err, Error, Result};
use crate::params::ParamVector;
use crate::synth::SampleSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Architecture {
    /// Multinomial logistic regression: `logits = W x + b`.
    SoftmaxLinear { input_dim: usize, num_classes: usize },
    /// `logits = W2 tanh(W1 x + b1) + b2`.
    OneHiddenLayerMlp { input_dim: usize, hidden_dim: usize, num_classes: usize },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::SoftmaxLinear { input_dim, .. } | Architecture::OneHiddenLayerMlp { input_dim, .. } => {
                input_dim
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            Architecture::SoftmaxLinear { num_classes, .. } | Architecture::OneHiddenLayerMlp { num_classes, .. } => {
                num_classes
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::SoftmaxLinear { input_dim: d, num_classes: c } => d * c + c,
            Architecture::OneHiddenLayerMlp { input_dim: d, hidden_dim: h, num_classes: c } => h * d + h + c * h + c,
        }
    }

    pub fn shape_tag(&self) -> String {
        match *self {
            Architecture::SoftmaxLinear { input_dim, num_classes } => {
                format!("softmax-linear:d={input_dim}:c={num_classes}")
            }
            Architecture::OneHiddenLayerMlp { input_dim, hidden_dim, num_classes } => {
                format!("mlp-tanh:d={input_dim}:h={hidden_dim}:c={num_classes}")
            }
        }
    }

    pub fn from_shape_tag(tag: &str) -> Result<Self> {
        let mut parts = tag.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut field = |name: &str| -> Result<usize> {
            let p = parts.next().ok_or_else(|| shape_err(format!("shape tag '{tag}' is truncated")))?;
            p.strip_prefix(name)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| shape_err(format!("shape tag '{tag}': bad field '{p}'")))
        };
        let arch = match kind {
            "softmax-linear" => Architecture::SoftmaxLinear { input_dim: field("d")?, num_classes: field("c")? },
            "mlp-tanh" => Architecture::OneHiddenLayerMlp {
                input_dim: field("d")?,
                hidden_dim: field("h")?,
                num_classes: field("c")?,
            },
            _ => return Err(shape_err(format!("unknown architecture in shape tag '{tag}'"))),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::SoftmaxLinear { input_dim, num_classes } => input_dim > 0 && num_classes > 0,
            Architecture::OneHiddenLayerMlp { input_dim, hidden_dim, num_classes } => {
                input_dim > 0 && hidden_dim > 0 && num_classes > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(param_err("model dimensions must be positive"))
        }
    }

    pub fn of(model: &ParamVector) -> Result<Self> {
        let arch = Architecture::from_shape_tag(model.shape_tag())?;
        if arch.param_count() != model.len() {
            return Err(shape_err(format!(
                "shape tag '{}' implies {} parameters, vector has {}",
                model.shape_tag(),
                arch.param_count(),
                model.len()
            )));
        }
        Ok(arch)
    }

    pub(crate) fn check_data(&self, data: &SampleSet) -> Result<()> {
        if data.dim() != self.input_dim() {
            return Err(shape_err(format!("model expects {} inputs, data has {}", self.input_dim(), data.dim())));
        }
        if let Some(&y) = data.labels().iter().find(|&&y| y >= self.num_classes()) {
            return Err(shape_err(format!("label {y} out of range for {} classes", self.num_classes())));
        }
        Ok(())
    }

    /// Writes logits into `out` (length `num_classes`); `hidden` is scratch space.
    pub(crate) fn logits(&self, p: &[f64], x: &[f64], hidden: &mut Vec<f64>, out: &mut [f64]) {
        match *self {
            Architecture::SoftmaxLinear { input_dim: d, num_classes: c } => {
                let (w, b) = p.split_at(d * c);
                for k in 0..c {
                    out[k] = b[k] + dot(&w[k * d..(k + 1) * d], x);
                }
            }
            Architecture::OneHiddenLayerMlp { input_dim: d, hidden_dim: h, num_classes: c } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                hidden.clear();
                hidden.extend((0..h).map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh()));
                for k in 0..c {
                    out[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
                }
            }
        }
    }

    /// Adds `scale * ∂CE/∂θ` for one sample to `grad`. `probs` holds softmax
    /// probabilities on entry and is overwritten.
    fn accumulate_grad(
        &self,
        p: &[f64],
        x: &[f64],
        y: usize,
        hidden: &[f64],
        probs: &mut [f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        probs[y] -= 1.0;
        match *self {
            Architecture::SoftmaxLinear { input_dim: d, num_classes: c } => {
                let (gw, gb) = grad.split_at_mut(d * c);
                for k in 0..c {
                    let delta = scale * probs[k];
                    gb[k] += delta;
                    for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += delta * xi;
                    }
                }
            }
            Architecture::OneHiddenLayerMlp { input_dim: d, hidden_dim: h, num_classes: c } => {
                let w2 = &p[h * d + h..h * d + h + c * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                for k in 0..c {
                    let delta = scale * probs[k];
                    gb2[k] += delta;
                    for (g, hj) in gw2[k * h..(k + 1) * h].iter_mut().zip(hidden) {
                        *g += delta * hj;
                    }
                }
                for j in 0..h {
                    let back: f64 = (0..c).map(|k| probs[k] * w2[k * h + j]).sum();
                    let dz = scale * back * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += dz;
                    for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += dz * xi;
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable `log Σ exp(z)`; turns `z` into softmax probabilities in place.
fn log_softmax_inplace(z: &mut [f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
    m + s.ln()
}

/// Mean cross-entropy and its gradient over the rows `indices` of `data`.
pub(crate) fn loss_and_grad(
    arch: &Architecture,
    p: &[f64],
    data: &SampleSet,
    indices: &[usize],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let c = arch.num_classes();
    let mut z = vec![0.0; c];
    let mut hidden = Vec::new();
    let scale = 1.0 / indices.len() as f64;
    let mut total = 0.0;
    for &i in indices {
        let x = data.input(i);
        let y = data.label(i);
        arch.logits(p, x, &mut hidden, &mut z);
        let zy = z[y];
        let lse = log_softmax_inplace(&mut z);
        total += lse - zy;
        arch.accumulate_grad(p, x, y, &hidden, &mut z, scale, grad);
    }
    total * scale
}

/// Mean cross-entropy over the whole sample set.
pub fn loss(model: &ParamVector, data: &SampleSet) -> Result<f64> {
    let arch = Architecture::of(model)?;
    arch.check_data(data)?;
    if data.is_empty() {
        return Err(param_err("cannot compute loss on an empty sample set"));
    }
    let c = arch.num_classes();
    let mut z = vec![0.0; c];
    let mut hidden = Vec::new();
    let mut total = 0.0;
    for i in 0..data.len() {
        arch.logits(model.values(), data.input(i), &mut hidden, &mut z);
        let zy = z[data.label(i)];
        let lse = log_softmax_inplace(&mut z);
        total += lse - zy;
    }
    let mean = total / data.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    // Rounding in lse - z_y can leave a tiny negative for confident correct predictions.
    Ok(mean.max(0.0))
}

/// Full-batch gradient of [`loss`].
pub fn gradient(model: &ParamVector, data: &SampleSet) -> Result<Vec<f64>> {
    let arch = Architecture::of(model)?;
    arch.check_data(data)?;
    if data.is_empty() {
        return Err(param_err("cannot compute gradient on an empty sample set"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut g = vec![0.0; model.len()];
    loss_and_grad(&arch, model.values(), data, &idx, &mut g);
    Ok(g)
}

/// Predicted class per sample (ties resolved toward the lowest class index).
pub fn predict(model: &ParamVector, data: &SampleSet) -> Result<Vec<usize>> {
    let arch = Architecture::of(model)?;
    if data.dim() != arch.input_dim() {
        return Err(shape_err(format!("model expects {} inputs, data has {}", arch.input_dim(), data.dim())));
    }
    let mut z = vec![0.0; arch.num_classes()];
    let mut hidden = Vec::new();
    Ok((0..data.len())
        .map(|i| {
            arch.logits(model.values(), data.input(i), &mut hidden, &mut z);
            let mut best = 0;
            for k in 1..z.len() {
                if z[k] > z[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}
