//! Exact quadratic testbed.
//!
//! Each domain's loss is `l_i + ½(θ-θ_i)ᵀH_i(θ-θ_i)`, so the mixture optimum
//! is available in closed form and the linear-merge proxy can be checked
//! against it exactly.

use crate::error::{param_err, shape_err, Error, Result};
use crate::evalx::spearman;
use crate::linalg::{self, Cholesky, Matrix};
use crate::params::{self, ParamVector};
use crate::rng;
use crate::simplex::{MixtureGrid, MixtureWeights};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QuadDomain {
    optimum: ParamVector,
    hessian: Matrix,
    base_loss: f64,
    chol: Cholesky,
}

impl PartialEq for QuadDomain {
    fn eq(&self, other: &Self) -> bool {
        self.optimum == other.optimum && self.hessian == other.hessian && self.base_loss == other.base_loss
    }
}

impl QuadDomain {
    pub fn new(optimum: ParamVector, hessian: Matrix, base_loss: f64) -> Result<Self> {
        if !hessian.is_square() || hessian.rows() != optimum.len() {
            return Err(shape_err(format!(
                "hessian is {}x{} but optimum has {} entries",
                hessian.rows(),
                hessian.cols(),
                optimum.len()
            )));
        }
        if hessian.asymmetry() > SYMMETRY_TOLERANCE {
            return Err(param_err("hessian is not symmetric"));
        }
        if !(base_loss >= 0.0) || !base_loss.is_finite() {
            return Err(param_err(format!("base loss must be finite and >= 0, got {base_loss}")));
        }
        let chol = Cholesky::factor(&hessian)?;
        Ok(QuadDomain { optimum, hessian, base_loss, chol })
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn optimum(&self) -> &ParamVector {
        &self.optimum
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn base_loss(&self) -> f64 {
        self.base_loss
    }

    /// `H_i (θ - θ_i)`
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let diff = self.offset(theta)?;
        self.hessian.matvec(&diff)
    }

    fn offset(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(shape_err(format!("point has {} entries, domain has dimension {}", theta.len(), self.dim())));
        }
        Ok(theta.iter().zip(self.optimum.values()).map(|(a, b)| a - b).collect())
    }
}

/// `l_i + ½(θ-θ_i)ᵀH_i(θ-θ_i)`; the quadratic term is `½‖L_iᵀ(θ-θ_i)‖²` so it is never negative.
pub fn quad_loss(theta: &ParamVector, domain: &QuadDomain) -> Result<f64> {
    quad_loss_values(theta.values(), domain)
}

pub(crate) fn quad_loss_values(theta: &[f64], domain: &QuadDomain) -> Result<f64> {
    let diff = domain.offset(theta)?;
    Ok(domain.base_loss + 0.5 * domain.chol.quadratic_form(&diff))
}

pub fn quad_mixture_loss(theta: &ParamVector, domains: &[QuadDomain], w: &MixtureWeights) -> Result<f64> {
    if domains.len() != w.k() {
        return Err(shape_err(format!("{} domains but mixture has K={}", domains.len(), w.k())));
    }
    let mut total = 0.0;
    for (d, &wi) in domains.iter().zip(w.weights()) {
        total += wi * quad_loss(theta, d)?;
    }
    Ok(total)
}

/// `Σ_i w_i H_i (θ - θ_i)`
pub fn quad_mixture_gradient(theta: &[f64], domains: &[QuadDomain], w: &MixtureWeights) -> Result<Vec<f64>> {
    let mut g = vec![0.0; theta.len()];
    for (d, &wi) in domains.iter().zip(w.weights()) {
        for (gj, hj) in g.iter_mut().zip(d.gradient(theta)?) {
            *gj += wi * hj;
        }
    }
    Ok(g)
}

fn optima_and_shared_center(k: usize, d: usize, expert_spread: f64, rng: &mut rng::Rng) -> Vec<ParamVector> {
    let center: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    // Random unit offsets of length spread/√2 are nearly orthogonal in high d,
    // which puts pairwise distances near `expert_spread`.
    let radius = expert_spread / std::f64::consts::SQRT_2;
    (0..k)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let n = linalg::norm(&dir);
            let v = center.iter().zip(&dir).map(|(c, u)| c + radius * u / n).collect();
            ParamVector::new(v, format!("quad:d={d}")).expect("finite optimum")
        })
        .collect()
}

fn random_spd(d: usize, condition_cap: f64, rng: &mut rng::Rng) -> Matrix {
    let eig: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..=condition_cap)).collect();
    if eig.iter().all(|&e| e == eig[0]) {
        let mut m = Matrix::identity(d);
        for i in 0..d {
            m[(i, i)] = eig[0];
        }
        return m;
    }
    let q = linalg::random_orthogonal(d, rng);
    let mut h = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d).map(|k| q[(i, k)] * eig[k] * q[(j, k)]).sum();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

fn check_testbed_args(k: usize, d: usize, condition_cap: f64, expert_spread: f64) -> Result<()> {
    if k < 2 {
        return Err(param_err("testbed needs K >= 2"));
    }
    if d < 2 {
        return Err(param_err("testbed needs d >= 2"));
    }
    if !(condition_cap >= 1.0) || !condition_cap.is_finite() {
        return Err(param_err("condition cap must be >= 1"));
    }
    if !(expert_spread > 0.0) || !expert_spread.is_finite() {
        return Err(param_err("expert spread must be positive"));
    }
    Ok(())
}

/// K domains with independent random SPD Hessians (eigenvalues in
/// `[1, condition_cap]`, Haar-random eigenvectors).
pub fn make_random_testbed(
    k: usize,
    d: usize,
    condition_cap: f64,
    expert_spread: f64,
    seed: u64,
) -> Result<Vec<QuadDomain>> {
    check_testbed_args(k, d, condition_cap, expert_spread)?;
    let mut rng = rng::stream(seed);
    let optima = optima_and_shared_center(k, d, expert_spread, &mut rng);
    optima
        .into_iter()
        .map(|opt| {
            let h = random_spd(d, condition_cap, &mut rng);
            let l = rng.random_range(0.0..1.0);
            QuadDomain::new(opt, h, l)
        })
        .collect()
}

/// Like [`make_random_testbed`] but every domain shares one Hessian.
pub fn make_shared_hessian_testbed(
    k: usize,
    d: usize,
    condition_cap: f64,
    expert_spread: f64,
    seed: u64,
) -> Result<Vec<QuadDomain>> {
    check_testbed_args(k, d, condition_cap, expert_spread)?;
    let mut rng = rng::stream(seed);
    let optima = optima_and_shared_center(k, d, expert_spread, &mut rng);
    let h = random_spd(d, condition_cap, &mut rng);
    optima
        .into_iter()
        .map(|opt| {
            let l = rng.random_range(0.0..1.0);
            QuadDomain::new(opt, h.clone(), l)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryRow {
    pub mixture: MixtureWeights,
    pub grad_inf_norm: f64,
    pub loss_gap: f64,
    pub proxy_loss: f64,
    pub oracle_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub rows: Vec<TheoryRow>,
    /// Rank agreement of `-loss(θ_lin)` with `-loss(θ_exact)`; `None` when the
    /// grid has fewer than two points or either column is constant.
    pub spearman: Option<f64>,
    pub max_gap: f64,
}

impl TheoryReport {
    pub fn max_grad_inf_norm(&self) -> f64 {
        self.rows.iter().fold(0.0_f64, |m, r| m.max(r.grad_inf_norm))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mixture,grad_inf_norm,loss_gap,proxy_loss,oracle_loss\n");
        for r in &self.rows {
            out.push_str(&crate::io::csv_line(&[
                r.mixture.to_json17(),
                crate::io::num(r.grad_inf_norm),
                crate::io::num(r.loss_gap),
                crate::io::num(r.proxy_loss),
                crate::io::num(r.oracle_loss),
            ]));
        }
        out
    }
}

/// Compare the closed-form mixture optimum with the linear merge on every grid point.
pub fn theory_check(domains: &[QuadDomain], grid: &MixtureGrid) -> Result<TheoryReport> {
    if domains.is_empty() {
        return Err(param_err("testbed is empty"));
    }
    if grid.is_empty() {
        return Err(param_err("grid is empty"));
    }
    if grid.k != domains.len() {
        return Err(shape_err(format!("grid has K={} but testbed has {}", grid.k, domains.len())));
    }
    let optima: Vec<ParamVector> = domains.iter().map(|d| d.optimum().clone()).collect();
    let mut rows = Vec::with_capacity(grid.len());
    for w in &grid.mixtures {
        let exact = params::merge_hessian_weighted(domains, w)?;
        let lin = params::merge_vectors(&optima, w)?;
        let grad = quad_mixture_gradient(exact.values(), domains, w)?;
        let grad_inf_norm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let proxy_loss = quad_mixture_loss(&lin, domains, w)?;
        let oracle_loss = quad_mixture_loss(&exact, domains, w)?;
        // With zero gradient at θ_exact the gap is exactly ½δᵀ(Σ w_i H_i)δ.
        let delta: Vec<f64> = lin.values().iter().zip(exact.values()).map(|(a, b)| a - b).collect();
        let loss_gap = domains.iter().zip(w.weights()).map(|(d, &wi)| wi * 0.5 * d.chol.quadratic_form(&delta)).sum();
        rows.push(TheoryRow { mixture: w.clone(), grad_inf_norm, loss_gap, proxy_loss, oracle_loss });
    }
    let proxy: Vec<f64> = rows.iter().map(|r| -r.proxy_loss).collect();
    let oracle: Vec<f64> = rows.iter().map(|r| -r.oracle_loss).collect();
    let spearman = if rows.len() >= 2 {
        match spearman(&proxy, &oracle) {
            Ok(r) => Some(r),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let max_gap = rows.iter().fold(0.0_f64, |m, r| m.max(r.loss_gap));
    Ok(TheoryReport { rows, spearman, max_gap })
}
