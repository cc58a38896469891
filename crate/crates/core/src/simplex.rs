//! Mixture weights on the probability simplex: lattice grids, Dirichlet
//! draws, and the uniform mixture.

use crate::error::{param_err, Error, Result};
use crate::rng;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Tolerance on `|Σw - 1|` after normalization.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    /// Builds a mixture from nonnegative proportions, normalizing them to sum to one.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(param_err("mixture needs at least one domain"));
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(param_err(format!("mixture weight {bad} is negative or non-finite")));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(param_err("mixture weights sum to zero"));
        }
        // Inputs already on the simplex are kept bit-for-bit (lattice points stay exact).
        let w: Vec<f64> =
            if (total - 1.0).abs() <= SUM_TOLERANCE { raw } else { raw.iter().map(|v| v / total).collect() };
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Numeric(format!("normalized mixture sums to {sum}")));
        }
        Ok(MixtureWeights(w))
    }

    /// The vertex that puts all mass on domain `i`.
    pub fn vertex(k: usize, i: usize) -> Result<Self> {
        if i >= k {
            return Err(param_err(format!("vertex {i} out of range for K={k}")));
        }
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Ok(MixtureWeights(w))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    /// Index of the single nonzero weight, if this mixture is a vertex.
    pub fn vertex_index(&self) -> Option<usize> {
        let mut nz = self.0.iter().enumerate().filter(|(_, w)| **w != 0.0);
        match (nz.next(), nz.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    /// ∞-norm distance between two mixtures of equal K.
    pub fn max_abs_diff(&self, other: &MixtureWeights) -> f64 {
        if self.k() != other.k() {
            return f64::INFINITY;
        }
        self.0.iter().zip(&other.0).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn approx_eq(&self, other: &MixtureWeights, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Lexicographic order on the weight vector.
    pub fn lex_cmp(&self, other: &MixtureWeights) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.k().cmp(&other.k())
    }

    /// JSON array with 17 significant digits per weight.
    pub fn to_json17(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|&v| fmt_sig17(v)).collect();
        format!("[{}]", parts.join(","))
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MixtureWeights::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

impl std::fmt::Display for MixtureWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.4}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Decimal rendering of `x` with exactly 17 significant digits, no exponent.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{:.16e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if (exp as usize) + 1 >= digits.len() {
        format!("{}{}.0", digits, "0".repeat(exp as usize + 1 - digits.len()))
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

/// All lattice points of resolution `1/m` on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrid {
    pub k: usize,
    pub step_denominator: usize,
    pub include_boundary: bool,
    pub mixtures: Vec<MixtureWeights>,
}

impl MixtureGrid {
    pub fn len(&self) -> usize {
        self.mixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixtures.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mixes: Vec<String> = self.mixtures.iter().map(MixtureWeights::to_json17).collect();
        format!(
            "{{\"k\":{},\"step_denominator\":{},\"interior\":{},\"mixtures\":[{}]}}",
            self.k,
            self.step_denominator,
            !self.include_boundary,
            mixes.join(",")
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            k: usize,
            step_denominator: usize,
            interior: bool,
            mixtures: Vec<MixtureWeights>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Ok(MixtureGrid {
            k: raw.k,
            step_denominator: raw.step_denominator,
            include_boundary: !raw.interior,
            mixtures: raw.mixtures,
        })
    }
}

/// Enumerates all compositions of `m` into `k` parts (positive parts for the
/// interior grid), in lexicographic order of the parts.
pub fn enumerate_grid(k: usize, m: usize, include_boundary: bool) -> Result<MixtureGrid> {
    if k == 0 {
        return Err(param_err("K must be at least 1"));
    }
    if m == 0 {
        return Err(param_err("m must be at least 1"));
    }
    if !include_boundary && m < k {
        return Err(param_err(format!("interior grid needs m >= K (got m={m}, K={k})")));
    }
    let min_part = usize::from(!include_boundary);
    let mut out = Vec::new();
    let mut parts = vec![0usize; k];
    compositions(&mut parts, 0, m, min_part, &mut |p| {
        let w: Vec<f64> = p.iter().map(|&a| a as f64 / m as f64).collect();
        out.push(MixtureWeights::new(w));
    });
    let mixtures = out.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MixtureGrid { k, step_denominator: m, include_boundary, mixtures })
}

fn compositions(parts: &mut [usize], pos: usize, remaining: usize, min_part: usize, emit: &mut dyn FnMut(&[usize])) {
    let k = parts.len();
    if pos == k - 1 {
        if remaining >= min_part {
            parts[pos] = remaining;
            emit(parts);
        }
        return;
    }
    let slots_after = k - pos - 1;
    let reserve = slots_after * min_part;
    if remaining < reserve + min_part {
        return;
    }
    for a in min_part..=(remaining - reserve) {
        parts[pos] = a;
        compositions(parts, pos + 1, remaining - a, min_part, emit);
    }
}

/// `count` independent draws from the symmetric Dirichlet(concentration·1_K).
pub fn sample_dirichlet(k: usize, count: usize, concentration: f64, seed: u64) -> Result<Vec<MixtureWeights>> {
    if k < 2 {
        return Err(param_err("Dirichlet sampling needs K >= 2"));
    }
    if count == 0 {
        return Err(param_err("count must be at least 1"));
    }
    if !(concentration > 0.0) || !concentration.is_finite() {
        return Err(param_err(format!("concentration must be positive, got {concentration}")));
    }
    let mut rng = rng::stream(seed);
    let gamma = if concentration == 1.0 {
        None
    } else {
        Some(Gamma::new(concentration, 1.0).map_err(|e| param_err(e.to_string()))?)
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let draws: Vec<f64> = (0..k)
            .map(|_| match &gamma {
                // Exp(1) = Gamma(1): -ln(u) with u in (0, 1].
                None => -(1.0 - rng.random::<f64>()).ln(),
                Some(g) => g.sample(&mut rng),
            })
            .collect();
        let total: f64 = draws.iter().sum();
        // Tiny concentrations can underflow every coordinate; redraw.
        if total > 0.0 && total.is_finite() {
            out.push(MixtureWeights::new(draws)?);
        }
    }
    Ok(out)
}

/// `(1/K, ..., 1/K)`.
pub fn uniform_mixture(k: usize) -> Result<MixtureWeights> {
    if k == 0 {
        return Err(param_err("K must be at least 1"));
    }
    MixtureWeights::new(vec![1.0; k])
}

/// JSON array of mixtures, 17 significant digits per weight.
pub fn mixtures_to_json(mixes: &[MixtureWeights]) -> String {
    let parts: Vec<String> = mixes.iter().map(MixtureWeights::to_json17).collect();
    format!("[{}]", parts.join(","))
}
