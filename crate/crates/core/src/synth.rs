//! Synthetic labeled domains and mixture datasets.
//!
//! A domain draws a class uniformly, places the sample at the class center
//! after a domain-specific rotation and offset, and adds isotropic Gaussian
//! noise. Domains share the label space, so a single classifier trained on a
//! mixture has to trade the domains off against each other.

use crate::error::{param_err, shape_err, Error, Result};
use crate::rng;
use crate::simplex::MixtureWeights;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Pairwise plane rotation: coordinates are paired by a seeded permutation and
/// each pair is rotated by `angle` radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub seed: u64,
    pub angle: f64,
}

impl Rotation {
    fn apply(&self, x: &mut [f64]) {
        let mut r = rng::stream(self.seed);
        let perm = rng::permutation(&mut r, x.len());
        let (s, c) = self.angle.sin_cos();
        for pair in perm.chunks_exact(2) {
            let (i, j) = (pair[0], pair[1]);
            let (a, b) = (x[i], x[j]);
            x[i] = c * a - s * b;
            x[j] = s * a + c * b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub input_dim: usize,
    pub num_classes: usize,
    /// `num_classes` rows of `input_dim` coordinates.
    pub centers: Vec<Vec<f64>>,
    pub noise_scale: f64,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub rotation: Option<Rotation>,
    pub pool_size: usize,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(param_err(format!("domain '{}': input_dim must be >= 1", self.name)));
        }
        if self.num_classes < 2 {
            return Err(param_err(format!("domain '{}': needs >= 2 classes", self.name)));
        }
        if self.centers.len() != self.num_classes || self.centers.iter().any(|c| c.len() != self.input_dim) {
            return Err(shape_err(format!(
                "domain '{}': centers must be {}x{}",
                self.name, self.num_classes, self.input_dim
            )));
        }
        if self.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(param_err(format!("domain '{}': non-finite center", self.name)));
        }
        // Zero noise is admitted as the degenerate limit (samples on the centers).
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(param_err(format!("domain '{}': noise scale must be >= 0", self.name)));
        }
        if let Some(off) = &self.offset {
            if off.len() != self.input_dim {
                return Err(shape_err(format!("domain '{}': offset length", self.name)));
            }
        }
        if self.pool_size == 0 {
            return Err(param_err(format!("domain '{}': pool_size must be >= 1", self.name)));
        }
        Ok(())
    }

    /// Class centers after rotation and offset.
    pub fn effective_centers(&self) -> Vec<Vec<f64>> {
        self.centers
            .iter()
            .map(|c| {
                let mut x = c.clone();
                if let Some(rot) = &self.rotation {
                    rot.apply(&mut x);
                }
                if let Some(off) = &self.offset {
                    for (xi, oi) in x.iter_mut().zip(off) {
                        *xi += oi;
                    }
                }
                x
            })
            .collect()
    }
}

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    domain_tags: Vec<usize>,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>, domain_tags: Vec<usize>, seed: u64) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() || labels.len() != domain_tags.len() {
            return Err(shape_err("sample set columns have inconsistent lengths"));
        }
        Ok(SampleSet { dim, features, labels, domain_tags, seed })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn domain_tags(&self) -> &[usize] {
        &self.domain_tags
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut tags = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
            tags.push(self.domain_tags[i]);
        }
        SampleSet { dim: self.dim, features, labels, domain_tags: tags, seed: self.seed }
    }

    /// Samples whose domain tag equals `domain`.
    pub fn domain_part(&self, domain: usize) -> SampleSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.domain_tags[i] == domain).collect();
        self.select(&idx)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        header.push("domain".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut row: Vec<String> = self.input(i).iter().map(|v| crate::io::num(*v)).collect();
            row.push(self.labels[i].to_string());
            row.push(self.domain_tags[i].to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Draws `spec.pool_size` samples from the domain. Domain tags are 0; mixture
/// assembly re-tags samples with their pool index.
pub fn build_domain_pool(spec: &DomainSpec, seed: u64) -> Result<SampleSet> {
    spec.validate()?;
    let centers = spec.effective_centers();
    let mut rng = rng::stream(seed);
    let d = spec.input_dim;
    let mut features = Vec::with_capacity(spec.pool_size * d);
    let mut labels = Vec::with_capacity(spec.pool_size);
    for _ in 0..spec.pool_size {
        let y = rng.random_range(0..spec.num_classes);
        labels.push(y);
        for &c in &centers[y] {
            let eps: f64 = StandardNormal.sample(&mut rng);
            features.push(c + spec.noise_scale * eps);
        }
    }
    let n = labels.len();
    SampleSet::new(d, features, labels, vec![0; n], seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssemblyMode {
    /// Domain of each sample drawn with probability `w_i`.
    Multinomial,
    /// Deterministic largest-remainder counts.
    #[default]
    Apportioned,
}

/// Largest-remainder apportionment of `n` over `w`; ties go to the lower index.
pub fn apportion(w: &MixtureWeights, n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = w.weights().iter().map(|wi| wi * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Builds `D_w(N)`: `n` distinct samples drawn from the pools according to `w`.
pub fn assemble_mixture(
    pools: &[SampleSet],
    w: &MixtureWeights,
    n: usize,
    seed: u64,
    mode: AssemblyMode,
) -> Result<SampleSet> {
    if pools.len() != w.k() {
        return Err(shape_err(format!("{} pools but mixture has K={}", pools.len(), w.k())));
    }
    if n == 0 {
        return Err(param_err("budget N must be >= 1"));
    }
    let dim = pools[0].dim();
    if pools.iter().any(|p| p.dim() != dim) {
        return Err(shape_err("pools have different input dimensions"));
    }
    for (i, p) in pools.iter().enumerate() {
        if p.len() < n {
            return Err(Error::Capacity(format!(
                "domain {i} has {} samples, budget N={n} requires at least that many",
                p.len()
            )));
        }
    }
    let orders: Vec<Vec<usize>> = pools
        .iter()
        .enumerate()
        .map(|(i, p)| rng::permutation(&mut rng::stream(rng::derive(seed, "pool-order", &[i as u64])), p.len()))
        .collect();
    let mut rng = rng::stream(rng::derive(seed, "assemble", &[]));
    let mut taken = vec![0usize; pools.len()];
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(n);
    match mode {
        AssemblyMode::Apportioned => {
            for (i, &c) in apportion(w, n).iter().enumerate() {
                for _ in 0..c {
                    picks.push((i, orders[i][taken[i]]));
                    taken[i] += 1;
                }
            }
        }
        AssemblyMode::Multinomial => {
            let cdf: Vec<f64> = w
                .weights()
                .iter()
                .scan(0.0, |acc, wi| {
                    *acc += wi;
                    Some(*acc)
                })
                .collect();
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let i = cdf
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or_else(|| w.weights().iter().rposition(|&x| x > 0.0).unwrap_or(0));
                if taken[i] >= pools[i].len() {
                    return Err(Error::Capacity(format!("domain {i} exhausted")));
                }
                picks.push((i, orders[i][taken[i]]));
                taken[i] += 1;
            }
        }
    }
    let order = rng::permutation(&mut rng, picks.len());
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    for &o in &order {
        let (dom, idx) = picks[o];
        features.extend_from_slice(pools[dom].input(idx));
        labels.push(pools[dom].label(idx));
        tags.push(dom);
    }
    SampleSet::new(dim, features, labels, tags, seed)
}
