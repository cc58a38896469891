//! Loss probes along random directions and projections of models onto the
//! plane spanned by two experts.

use crate::error::{param_err, shape_err, Error, Result};
use crate::io::{csv_line, num};
use crate::linalg::{dot, norm};
use crate::params::ParamVector;
use crate::quadbed::{quad_loss_values, QuadDomain};
use crate::rng;
use crate::simplex::MixtureWeights;
use crate::synth::SampleSet;
use crate::train;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_DIRECTIONS: usize = 5;
pub const DEFAULT_ALPHAS: usize = 41;

/// Loss evaluated along a probe: the full training set of a domain, or an
/// exact quadratic.
#[derive(Debug, Clone, Copy)]
pub enum ProbeTarget<'a> {
    Data(&'a SampleSet),
    Quad(&'a QuadDomain),
}

impl ProbeTarget<'_> {
    fn loss(&self, template: &ParamVector, theta: Vec<f64>) -> Result<f64> {
        match self {
            ProbeTarget::Data(d) => train::loss(&template.with_values(theta)?, d),
            ProbeTarget::Quad(q) => quad_loss_values(&theta, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeCurve {
    pub direction_id: usize,
    pub alphas: Vec<f64>,
    pub losses: Vec<f64>,
    pub rescale_norm: f64,
}

/// `num_alphas` evenly spaced values over `[-2, 2]`, exactly symmetric and
/// containing 0.
pub fn probe_alphas(num_alphas: usize) -> Result<Vec<f64>> {
    if num_alphas < 3 || num_alphas.is_multiple_of(2) {
        return Err(param_err("num_alphas must be odd and >= 3"));
    }
    let mid = (num_alphas / 2) as f64;
    Ok((0..num_alphas).map(|j| 2.0 * (j as f64 - mid) / mid).collect())
}

/// Evaluates the loss at `center + α·δ_j` for random Gaussian directions
/// `δ_j` rescaled to the distance between `center` and `other_expert`.
pub fn probe_loss(
    center: &ParamVector,
    other_expert: &ParamVector,
    target: ProbeTarget<'_>,
    num_directions: usize,
    num_alphas: usize,
    seed: u64,
) -> Result<Vec<ProbeCurve>> {
    if num_directions == 0 {
        return Err(param_err("num_directions must be >= 1"));
    }
    let alphas = probe_alphas(num_alphas)?;
    if center.len() != other_expert.len() {
        return Err(shape_err("center and other expert differ in length"));
    }
    if let ProbeTarget::Quad(q) = target {
        if q.dim() != center.len() {
            return Err(shape_err("quadratic domain dimension differs from the center"));
        }
    }
    let diff: Vec<f64> = center.values().iter().zip(other_expert.values()).map(|(a, b)| a - b).collect();
    let scale = norm(&diff);
    if scale == 0.0 {
        return Err(Error::Degenerate("center and other expert coincide; no probe scale".into()));
    }
    let center_loss = target.loss(center, center.values().to_vec())?;
    (0..num_directions)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(rng::derive(seed, "direction", &[j as u64]));
            let mut delta: Vec<f64> = (0..center.len()).map(|_| StandardNormal.sample(&mut r)).collect();
            let dn = norm(&delta);
            if dn == 0.0 {
                return Err(Error::Degenerate("sampled a zero direction".into()));
            }
            for v in &mut delta {
                *v = *v / dn * scale;
            }
            let losses = alphas
                .iter()
                .map(|&a| {
                    if a == 0.0 {
                        return Ok(center_loss);
                    }
                    let theta = center.values().iter().zip(&delta).map(|(c, d)| c + a * d).collect();
                    target.loss(center, theta)
                })
                .collect::<Result<Vec<_>>>()?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss on probe direction {j}")));
            }
            Ok(ProbeCurve { direction_id: j, alphas: alphas.clone(), losses, rescale_norm: scale })
        })
        .collect()
}

pub fn probe_curves_csv(curves: &[ProbeCurve]) -> String {
    let mut out = String::from("direction_id,alpha,loss\n");
    for c in curves {
        for (a, l) in c.alphas.iter().zip(&c.losses) {
            out.push_str(&csv_line(&[c.direction_id.to_string(), num(*a), num(*l)]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
    pub residual_norm: f64,
    pub mixture: MixtureWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneProjection {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    #[serde(skip)]
    pub origin: ParamVector,
    /// Planar coordinates of the two experts.
    pub expert_a: (f64, f64),
    pub expert_b: (f64, f64),
    pub points: Vec<PlanePoint>,
}

/// Planar coordinates and residual norm of `theta` relative to `origin`.
fn project_point(origin: &[f64], e1: &[f64], e2: &[f64], theta: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = theta.iter().zip(origin).map(|(t, o)| t - o).collect();
    let x = dot(&d, e1);
    let y = dot(&d, e2);
    let resid: Vec<f64> = d.iter().zip(e1).zip(e2).map(|((v, a), b)| v - x * a - y * b).collect();
    (x, y, norm(&resid))
}

/// Orthonormal basis centered at `base`: `e1` points at `e_a`, `e2` completes
/// the plane containing `e_b`.
pub fn project_to_expert_plane(
    base: &ParamVector,
    e_a: &ParamVector,
    e_b: &ParamVector,
    models: &[(MixtureWeights, ParamVector)],
) -> Result<PlaneProjection> {
    let n = base.len();
    if e_a.len() != n || e_b.len() != n || models.iter().any(|(_, p)| p.len() != n) {
        return Err(shape_err("all vectors must have the base model's length"));
    }
    let b = base.values();
    let mut e1: Vec<f64> = e_a.values().iter().zip(b).map(|(x, o)| x - o).collect();
    let n1 = norm(&e1);
    if n1 == 0.0 {
        return Err(Error::Degenerate("first expert coincides with the base model".into()));
    }
    e1.iter_mut().for_each(|v| *v /= n1);
    let db: Vec<f64> = e_b.values().iter().zip(b).map(|(x, o)| x - o).collect();
    // Two Gram-Schmidt passes keep e2 orthogonal to e1 at round-off level.
    let mut e2 = db.clone();
    for _ in 0..2 {
        let c = dot(&e2, &e1);
        e2.iter_mut().zip(&e1).for_each(|(v, u)| *v -= c * u);
    }
    let n2 = norm(&e2);
    if n2 <= 1e-10 {
        return Err(Error::Degenerate("experts are colinear with the base model".into()));
    }
    e2.iter_mut().for_each(|v| *v /= n2);
    let (ax, ay, _) = project_point(b, &e1, &e2, e_a.values());
    let (bx, by, _) = project_point(b, &e1, &e2, e_b.values());
    let points = models
        .par_iter()
        .map(|(w, p)| {
            let (x, y, residual_norm) = project_point(b, &e1, &e2, p.values());
            PlanePoint { x, y, residual_norm, mixture: w.clone() }
        })
        .collect();
    Ok(PlaneProjection { e1, e2, origin: base.clone(), expert_a: (ax, ay), expert_b: (bx, by), points })
}

/// RMS perpendicular distance of the projected points to the line through the
/// two expert projections, in units of the inter-expert distance.
pub fn line_alignment_score(projection: &PlaneProjection) -> Result<f64> {
    if projection.points.len() < 3 {
        return Err(param_err("alignment needs at least 3 points"));
    }
    let (ax, ay) = projection.expert_a;
    let (ux, uy) = (projection.expert_b.0 - ax, projection.expert_b.1 - ay);
    let len = ux.hypot(uy);
    if len == 0.0 {
        return Err(Error::Degenerate("expert projections coincide".into()));
    }
    let mean_sq = projection
        .points
        .iter()
        .map(|p| {
            let perp = (ux * (p.y - ay) - uy * (p.x - ax)).abs() / len;
            (perp / len).powi(2)
        })
        .sum::<f64>()
        / projection.points.len() as f64;
    Ok(mean_sq.sqrt())
}

impl PlaneProjection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,x,y,residual_norm,mixture\n");
        let (ax, ay) = self.expert_a;
        let (bx, by) = self.expert_b;
        out.push_str(&csv_line(&["expert_a".into(), num(ax), num(ay), num(0.0), String::new()]));
        out.push_str(&csv_line(&["expert_b".into(), num(bx), num(by), num(0.0), String::new()]));
        for p in &self.points {
            out.push_str(&csv_line(&["model".into(), num(p.x), num(p.y), num(p.residual_norm), p.mixture.to_json17()]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

pub fn probe_plot_data(curves: &[ProbeCurve]) -> Vec<PlotPoint> {
    curves
        .iter()
        .flat_map(|c| {
            c.alphas.iter().zip(&c.losses).map(move |(a, l)| PlotPoint {
                x: *a,
                y: *l,
                series: format!("direction-{}", c.direction_id),
            })
        })
        .collect()
}

pub fn projection_plot_data(p: &PlaneProjection) -> Vec<PlotPoint> {
    let mut out = vec![
        PlotPoint { x: p.expert_a.0, y: p.expert_a.1, series: "expert".into() },
        PlotPoint { x: p.expert_b.0, y: p.expert_b.1, series: "expert".into() },
    ];
    out.extend(p.points.iter().map(|q| PlotPoint { x: q.x, y: q.y, series: "model".into() }));
    out
}
