//! Flat parameter vectors and the merge operators defined over them.

use crate::error::{param_err, shape_err, Error, Result};
use crate::linalg::{self, Matrix};
use crate::quadbed::QuadDomain;
use crate::simplex::MixtureWeights;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"MXFPARAM";
pub const FORMAT_VERSION: u32 = 1;

/// Dense, finite model parameters plus a tag describing their layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    shape_tag: String,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(param_err("parameter vector must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        Ok(ParamVector { values, shape_tag: shape_tag.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape_tag(&self) -> &str {
        &self.shape_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(shape_err("replacement values differ in length"));
        }
        ParamVector::new(values, self.shape_tag.clone())
    }

    fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(shape_err(format!("lengths {} and {} differ", self.len(), other.len())));
        }
        if self.shape_tag != other.shape_tag {
            return Err(shape_err(format!("shape tags '{}' and '{}' differ", self.shape_tag, other.shape_tag)));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let tag = self.shape_tag.as_bytes();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(tag.len() as u32).to_le_bytes())?;
        w.write_all(tag)?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing MXFPARAM magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let mut tag = vec![0u8; u32::from_le_bytes(u32buf) as usize];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|e| Error::Format(e.to_string()))?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        ParamVector::new(values, tag)
    }

    /// Writes `path` (binary) and `path.json` (provenance) via temp-then-rename.
    pub fn save(&self, path: &Path, provenance: &serde_json::Value) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.shape_tag.len() + 8 * self.len());
        self.write_to(&mut buf)?;
        crate::io::write_atomic(path, &buf)?;
        let sidecar = sidecar_path(path);
        crate::io::write_atomic(&sidecar, serde_json::to_string_pretty(provenance)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        ParamVector::read_from(std::io::BufReader::new(f))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// A base model and one fine-tuned expert per domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSet {
    base: ParamVector,
    experts: Vec<ParamVector>,
    domain_names: Vec<String>,
}

impl ExpertSet {
    pub fn new(base: ParamVector, experts: Vec<ParamVector>, domain_names: Vec<String>) -> Result<Self> {
        if experts.is_empty() {
            return Err(param_err("expert set needs at least one expert"));
        }
        if domain_names.len() != experts.len() {
            return Err(shape_err(format!("{} experts but {} domain names", experts.len(), domain_names.len())));
        }
        for e in &experts {
            base.check_compatible(e)?;
        }
        Ok(ExpertSet { base, experts, domain_names })
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn base(&self) -> &ParamVector {
        &self.base
    }

    pub fn experts(&self) -> &[ParamVector] {
        &self.experts
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }
}

/// Linear merge `Σ_i w_i θ_i`.
///
/// Terms are taken in a canonical order (largest weight first, then by
/// values) and accumulated as compensated offsets from the leading expert, so
/// vertex mixtures and identical experts reproduce the expert bit-for-bit and
/// the result does not depend on how the experts are listed.
pub fn merge_linear(experts: &ExpertSet, w: &MixtureWeights) -> Result<ParamVector> {
    merge_vectors(experts.experts(), w)
}

pub(crate) fn merge_vectors(experts: &[ParamVector], w: &MixtureWeights) -> Result<ParamVector> {
    if experts.len() != w.k() {
        return Err(shape_err(format!("{} experts but mixture has K={}", experts.len(), w.k())));
    }
    let first = &experts[0];
    for e in &experts[1..] {
        first.check_compatible(e)?;
    }
    let weights = w.weights();
    let mut order: Vec<usize> = (0..experts.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b].total_cmp(&weights[a]).then_with(|| lex_values(experts[a].values(), experts[b].values()))
    });
    let anchor = experts[order[0]].values();
    let n = anchor.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let a = anchor[j];
        let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
        let (mut lo, mut hi) = (a, a);
        for &i in &order[1..] {
            let v = experts[i].values()[j];
            lo = lo.min(v);
            hi = hi.max(v);
            let term = weights[i] * (v - a);
            // Neumaier summation.
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        let merged = a + (sum + comp);
        out.push(merged.clamp(lo, hi));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("merged parameters are not finite".into()));
    }
    ParamVector::new(out, first.shape_tag())
}

fn lex_values(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Minimizer of the weighted sum of quadratic domain losses,
/// `(Σ w_j H_j)⁻¹ Σ w_i H_i θ_i`, solved by Cholesky (no explicit inverse).
pub fn merge_hessian_weighted(domains: &[QuadDomain], w: &MixtureWeights) -> Result<ParamVector> {
    if domains.is_empty() {
        return Err(param_err("need at least one domain"));
    }
    if domains.len() != w.k() {
        return Err(shape_err(format!("{} domains but mixture has K={}", domains.len(), w.k())));
    }
    let d = domains[0].dim();
    for dom in domains {
        if dom.dim() != d {
            return Err(shape_err("domains have different dimensions"));
        }
        domains[0].optimum().check_compatible(dom.optimum())?;
    }
    // A single active domain is minimized exactly at its own optimum.
    if let Some(i) = w.vertex_index() {
        return Ok(domains[i].optimum().clone());
    }
    let (a, b) = weighted_system(domains, w)?;
    let theta = linalg::solve_spd(&a, &b)?;
    let ax = a.matvec(&theta)?;
    let resid = ax.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.max_abs().max(b.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).max(1.0);
    if resid > 1e-9 * scale {
        return Err(Error::Numeric(format!("linear solve residual {resid:e} too large")));
    }
    ParamVector::new(theta, domains[0].optimum().shape_tag())
}

/// `(Σ w_j H_j, Σ w_i H_i θ_i)`.
pub(crate) fn weighted_system(domains: &[QuadDomain], w: &MixtureWeights) -> Result<(Matrix, Vec<f64>)> {
    let d = domains[0].dim();
    let mut a = Matrix::zeros(d, d);
    let mut b = vec![0.0; d];
    for (dom, &wi) in domains.iter().zip(w.weights()) {
        if wi == 0.0 {
            continue;
        }
        a.add_scaled(wi, dom.hessian())?;
        let h_theta = dom.hessian().matvec(dom.optimum().values())?;
        for (bj, hj) in b.iter_mut().zip(h_theta) {
            *bj += wi * hj;
        }
    }
    Ok((a, b))
}

/// Euclidean distance between two parameter vectors.
pub fn l2_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    // Scaled accumulation avoids overflow for large entries.
    let diffs: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let scale = diffs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let ss: f64 = diffs.iter().map(|v| (v / scale) * (v / scale)).sum();
    Ok(scale * ss.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadbed::QuadDomain;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec(), "test").unwrap()
    }

    fn set(experts: Vec<ParamVector>) -> ExpertSet {
        let names = (0..experts.len()).map(|i| format!("d{i}")).collect();
        let base = experts[0].with_values(vec![0.0; experts[0].len()]).unwrap();
        ExpertSet::new(base, experts, names).unwrap()
    }

    fn mix(w: &[f64]) -> MixtureWeights {
        MixtureWeights::new(w.to_vec()).unwrap()
    }

    #[test]
    fn vertex_merge_returns_expert() {
        let e = set(vec![pv(&[1.5, -2.0, 3.25]), pv(&[0.1, 0.2, 0.3])]);
        assert_eq!(merge_linear(&e, &mix(&[1.0, 0.0])).unwrap(), e.experts()[0]);
        assert_eq!(merge_linear(&e, &mix(&[0.0, 1.0])).unwrap(), e.experts()[1]);
    }

    #[test]
    fn identical_experts_are_a_fixed_point() {
        let theta = pv(&[0.3, -1.7, 2.9, 1e-3]);
        let e = set(vec![theta.clone(), theta.clone(), theta.clone()]);
        for w in [[0.2, 0.3, 0.5], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.9, 0.05, 0.05]] {
            assert_eq!(merge_linear(&e, &mix(&w)).unwrap(), theta);
        }
    }

    #[test]
    fn exact_small_merge() {
        let e = set(vec![pv(&[1.0, 0.0]), pv(&[0.0, 2.0])]);
        let m = merge_linear(&e, &mix(&[0.25, 0.75])).unwrap();
        assert_eq!(m.values(), &[0.25, 1.5]);
    }

    #[test]
    fn merge_rejects_mismatches() {
        let e = set(vec![pv(&[1.0, 0.0]), pv(&[0.0, 2.0])]);
        assert!(matches!(merge_linear(&e, &mix(&[0.2, 0.3, 0.5])), Err(Error::Structural(_))));
        let other_tag = ParamVector::new(vec![1.0, 2.0], "other").unwrap();
        assert!(
            ExpertSet::new(pv(&[0.0, 0.0]), vec![pv(&[1.0, 1.0]), other_tag], vec!["a".into(), "b".into()]).is_err()
        );
    }

    #[test]
    fn param_vector_rejects_non_finite() {
        assert!(ParamVector::new(vec![], "t").is_err());
        assert!(ParamVector::new(vec![1.0, f64::NAN], "t").is_err());
        assert!(ParamVector::new(vec![f64::INFINITY], "t").is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(l2_distance(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(l2_distance(&pv(&[0.0, 0.0]), &pv(&[3.0, 4.0])).unwrap(), 5.0);
        assert!(l2_distance(&pv(&[0.0]), &pv(&[3.0, 4.0])).is_err());
    }

    #[test]
    fn distance_matches_sum_of_squares() {
        let mut rng = crate::rng::stream(4);
        use rand::Rng;
        let a: Vec<f64> = (0..257).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..257).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut ss = 0.0;
        for i in 0..a.len() {
            ss += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let got = l2_distance(&pv(&a), &pv(&b)).unwrap();
        assert!((got - ss.sqrt()).abs() <= 1e-12 * ss.sqrt());
    }

    #[test]
    fn hessian_merge_diag_example() {
        let d1 = QuadDomain::new(pv(&[1.0, 0.0]), Matrix::from_diag(&[1.0, 2.0]), 0.0).unwrap();
        let d2 = QuadDomain::new(pv(&[0.0, 1.0]), Matrix::from_diag(&[2.0, 1.0]), 0.0).unwrap();
        // diag(1.5, 1.5) θ = (0.5, 0.5)  =>  θ = (1/3, 1/3)
        let t = merge_hessian_weighted(&[d1, d2], &mix(&[0.5, 0.5])).unwrap();
        for v in t.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hessian_merge_single_domain_is_expert() {
        let h = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let d = QuadDomain::new(pv(&[0.7, -0.4]), h, 1.0).unwrap();
        let t = merge_hessian_weighted(std::slice::from_ref(&d), &mix(&[1.0])).unwrap();
        assert_eq!(t, *d.optimum());
    }

    #[test]
    fn hessian_merge_identity_equals_linear() {
        let experts = vec![pv(&[1.0, 2.0, 3.0]), pv(&[-1.0, 0.5, 0.0]), pv(&[0.0, 0.0, 4.0])];
        let doms: Vec<QuadDomain> =
            experts.iter().map(|e| QuadDomain::new(e.clone(), Matrix::identity(3), 0.0).unwrap()).collect();
        let w = mix(&[0.2, 0.5, 0.3]);
        let h = merge_hessian_weighted(&doms, &w).unwrap();
        let l = merge_linear(&set(experts), &w).unwrap();
        for (a, b) in h.values().iter().zip(l.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let p = ParamVector::new(vec![1.0, -0.5], "softmax-linear:d=1:c=1").unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"MXFPARAM");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 22);
        assert_eq!(buf.len(), 8 + 4 + 4 + 22 + 8 + 16);
        assert_eq!(ParamVector::read_from(&buf[..]).unwrap(), p);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(ParamVector::read_from(&bad[..]), Err(Error::Format(_))));
    }

    fn experts_and_weights() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..6, 1usize..20).prop_flat_map(|(k, n)| {
            (prop::collection::vec(prop::collection::vec(-1e3..1e3f64, n), k), prop::collection::vec(0.0..1.0f64, k))
        })
    }

    proptest! {
        #[test]
        fn merge_is_permutation_equivariant_and_in_hull(
            (vals, raw_w) in experts_and_weights(),
            rot in 0usize..6,
        ) {
            prop_assume!(raw_w.iter().sum::<f64>() > 1e-6);
            let k = vals.len();
            let w = mix(&raw_w);
            let experts: Vec<ParamVector> = vals.iter().map(|v| pv(v)).collect();
            let m = merge_vectors(&experts, &w).unwrap();
            let shift = rot % k;
            let mut pe = experts.clone();
            pe.rotate_left(shift);
            let mut pw = w.weights().to_vec();
            pw.rotate_left(shift);
            let pm = merge_vectors(&pe, &MixtureWeights::new(pw).unwrap()).unwrap();
            prop_assert_eq!(m.values(), pm.values());
            for j in 0..m.len() {
                let lo = vals.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
                let hi = vals.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= m.values()[j] && m.values()[j] <= hi);
            }
        }

        #[test]
        fn binary_format_round_trips(vals in prop::collection::vec(-1e300..1e300f64, 1..64), tag in "[a-z:=0-9-]{0,24}") {
            let p = ParamVector::new(vals, tag).unwrap();
            let mut buf = Vec::new();
            p.write_to(&mut buf).unwrap();
            prop_assert_eq!(ParamVector::read_from(&buf[..]).unwrap(), p);
        }
    }
}
