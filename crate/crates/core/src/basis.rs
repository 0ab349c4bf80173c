//! Truncated orthonormal bases of the Bergman space.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::function::gamma::ln_gamma;

use crate::domain::{DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::jet::{table, MultiIndexTable};
use crate::linalg::{c, czero, hermitian_eigen, max_abs, CMat};
use crate::quadrature::QuadratureRule;

pub const MAX_ORDER: usize = 3;
/// Relative eigenvalue floor below which Gram directions count as dependent.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Relative kernel error that defines the truncation distance.
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// `z^α` with `|α| ≤ degree`.
    Monomial,
    /// `z^k` with `-degree ≤ k ≤ degree`; planar annulus only.
    LaurentMonomial,
    /// Polynomials orthonormalised by an Arnoldi recurrence on the
    /// quadrature rule; planar domains only.
    Arnoldi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub degree: usize,
    pub n: usize,
}

impl BasisSpec {
    pub fn monomial(n: usize, degree: usize) -> Self {
        Self { family: BasisFamily::Monomial, degree, n }
    }

    pub fn laurent(range: usize) -> Self {
        Self { family: BasisFamily::LaurentMonomial, degree: range, n: 1 }
    }

    pub fn arnoldi(degree: usize) -> Self {
        Self { family: BasisFamily::Arnoldi, degree, n: 1 }
    }

    /// Family and degree used when a configuration does not name one.
    pub fn default_for(domain: &DomainSpec) -> Self {
        match domain.kind() {
            DomainKind::Annulus { .. } => Self::laurent(40),
            DomainKind::CircularSegment { .. } | DomainKind::General(_) => Self::arnoldi(40),
            _ => Self::monomial(domain.dim(), 40),
        }
    }

    pub fn len(&self) -> usize {
        match self.family {
            BasisFamily::Monomial => table(self.n, self.degree).len(),
            BasisFamily::LaurentMonomial => 2 * self.degree + 1,
            BasisFamily::Arnoldi => self.degree + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_domain(&self, domain: &DomainSpec) -> Result<()> {
        if self.n != domain.dim() {
            return Err(Error::BasisDomainMismatch(format!(
                "basis dimension {} but domain dimension {}",
                self.n,
                domain.dim()
            )));
        }
        match self.family {
            BasisFamily::LaurentMonomial if !matches!(domain.kind(), DomainKind::Annulus { .. }) => {
                Err(Error::BasisDomainMismatch("Laurent monomials are square-integrable on the annulus only".into()))
            }
            BasisFamily::Arnoldi if self.n != 1 => Err(Error::BasisDomainMismatch("Arnoldi bases are planar".into())),
            _ => Ok(()),
        }
    }
}

/// Hessenberg recurrence `z q_k = Σ_{j ≤ k+1} h_{jk} q_j`.
#[derive(Debug, Clone)]
pub struct ArnoldiRecurrence {
    pub q0: f64,
    pub h: DMatrix<C64>,
}

impl ArnoldiRecurrence {
    /// Runs the recurrence on the nodes of `rule` (two Gram-Schmidt passes).
    pub fn build(rule: &QuadratureRule, degree: usize) -> Result<Self> {
        let m = rule.len();
        let w = &rule.weights;
        let z: Vec<C64> = rule.nodes.iter().map(|p| p[0]).collect();
        let q0 = 1.0 / rule.total_weight().sqrt();
        let mut q: Vec<Vec<C64>> = vec![vec![c(q0); m]];
        let mut h = DMatrix::<C64>::zeros(degree + 1, degree.max(1));
        for k in 0..degree {
            let mut v: Vec<C64> = (0..m).map(|i| z[i] * q[k][i]).collect();
            for _ in 0..2 {
                for (j, qj) in q.iter().enumerate() {
                    let p: C64 = (0..m).map(|i| w[i] * v[i] * qj[i].conj()).sum();
                    h[(j, k)] += p;
                    for i in 0..m {
                        v[i] -= qj[i] * p;
                    }
                }
            }
            let nv: f64 = (0..m).map(|i| w[i] * v[i].norm_sqr()).sum::<f64>().sqrt();
            if !(nv > 1e-300) {
                return Err(Error::RankDeficient(0.0));
            }
            h[(k + 1, k)] = c(nv);
            q.push(v.into_iter().map(|x| x / nv).collect());
        }
        Ok(Self { q0, h })
    }

    /// Values and derivatives up to `order` of `q_0..q_d` at `z`.
    fn eval(&self, z: C64, order: usize) -> DMatrix<C64> {
        let d = self.h.nrows() - 1;
        let mut out = DMatrix::<C64>::zeros(d + 1, order + 1);
        out[(0, 0)] = c(self.q0);
        for k in 0..d {
            let hk = self.h[(k + 1, k)];
            for m in 0..=order {
                let mut v = z * out[(k, m)];
                if m > 0 {
                    v += out[(k, m - 1)] * m as f64;
                }
                for j in 0..=k {
                    v -= self.h[(j, k)] * out[(j, m)];
                }
                out[(k + 1, m)] = v / hk;
            }
        }
        out
    }
}

/// Unnormalised holomorphic functions spanning the truncated space.
#[derive(Debug, Clone)]
pub enum RawBasis {
    Monomial(Arc<MultiIndexTable>),
    Laurent(Vec<i32>),
    Arnoldi(ArnoldiRecurrence),
}

impl RawBasis {
    pub fn len(&self) -> usize {
        match self {
            RawBasis::Monomial(t) => t.len(),
            RawBasis::Laurent(k) => k.len(),
            RawBasis::Arnoldi(a) => a.h.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row `k`, column `a`: `∂^a b_k(z)` with `a` running over `table(n, order)`.
    pub fn eval(&self, z: &[C64], order: usize) -> DMatrix<C64> {
        let n = z.len();
        let dt = table(n, order);
        match self {
            RawBasis::Monomial(t) => {
                let deg = t.max;
                let powers: Vec<Vec<C64>> = z
                    .iter()
                    .map(|zj| {
                        let mut p = vec![c(1.0); deg + 1];
                        for k in 1..=deg {
                            p[k] = p[k - 1] * zj;
                        }
                        p
                    })
                    .collect();
                let mut out = DMatrix::<C64>::zeros(t.len(), dt.len());
                for (k, alpha) in t.list.iter().enumerate() {
                    for (col, a) in dt.list.iter().enumerate() {
                        let mut v = c(1.0);
                        for j in 0..n {
                            if a[j] > alpha[j] {
                                v = czero();
                                break;
                            }
                            v *= powers[j][alpha[j] - a[j]] * falling(alpha[j] as f64, a[j]);
                        }
                        out[(k, col)] = v;
                    }
                }
                out
            }
            RawBasis::Laurent(ks) => {
                let mut out = DMatrix::<C64>::zeros(ks.len(), order + 1);
                for (row, &k) in ks.iter().enumerate() {
                    for m in 0..=order {
                        let f = falling(k as f64, m);
                        out[(row, m)] = if f == 0.0 { czero() } else { z[0].powi(k - m as i32) * f };
                    }
                }
                out
            }
            RawBasis::Arnoldi(a) => a.eval(z[0], order),
        }
    }
}

fn falling(x: f64, m: usize) -> f64 {
    (0..m).map(|i| x - i as f64).product()
}

/// `C` with `C^* G C = I`; basis functions are `φ_k = Σ_j conj(C_jk) b_j`.
#[derive(Debug, Clone)]
pub enum Whitening {
    Diagonal(Vec<f64>),
    Dense(CMat),
}

impl Whitening {
    pub fn matrix(&self) -> CMat {
        match self {
            Whitening::Diagonal(d) => {
                CMat::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|x| c(*x))))
            }
            Whitening::Dense(m) => m.clone(),
        }
    }

    fn apply(&self, raw: &DMatrix<C64>) -> DMatrix<C64> {
        match self {
            Whitening::Diagonal(d) => {
                let mut out = raw.clone();
                for (k, s) in d.iter().enumerate() {
                    out.row_mut(k).scale_mut(*s);
                }
                out
            }
            Whitening::Dense(m) => m.adjoint() * raw,
        }
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        match self {
            Whitening::Diagonal(_) => true,
            Whitening::Dense(m) => {
                let mut off = 0.0f64;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if i != j {
                            off = off.max(m[(i, j)].norm());
                        }
                    }
                }
                off <= tol * max_abs(m).max(1e-300)
            }
        }
    }
}

/// `G_jk = Σ_m w_m b_j(z_m) conj(b_k(z_m))`.
pub fn gram_matrix(raw: &RawBasis, rule: &QuadratureRule) -> Result<CMat> {
    let nb = raw.len();
    if rule.len() < nb {
        return Err(Error::ResolutionTooCoarse { nodes: rule.len(), required: nb });
    }
    let mut b = DMatrix::<C64>::zeros(nb, rule.len());
    for (m, (z, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = raw.eval(z, 0);
        let s = w.sqrt();
        for k in 0..nb {
            b[(k, m)] = v[(k, 0)] * s;
        }
    }
    let g = &b * b.adjoint();
    Ok(crate::linalg::hermitian_part(&g))
}

/// Cholesky whitening `C = L^{-*}`.
pub fn orthonormalize(g: &CMat) -> Result<CMat> {
    let (vals, _) = hermitian_eigen(g);
    let top = vals.last().copied().unwrap_or(0.0);
    if vals[0] < -EIGEN_FLOOR * top.abs() {
        return Err(Error::IndefiniteGram(vals[0]));
    }
    if top <= 0.0 || vals[0] < EIGEN_FLOOR * top {
        return Err(Error::RankDeficient(vals[0] / top));
    }
    let l = crate::linalg::cholesky_lower(g).ok_or(Error::IndefiniteGram(vals[0]))?;
    let linv = l.try_inverse().ok_or(Error::RankDeficient(vals[0] / top))?;
    Ok(linv.adjoint())
}

/// Eigen whitening that drops directions below `floor * λ_max`; returns the
/// (possibly rectangular) `C` and the number of dropped directions.
pub fn orthonormalize_floor(g: &CMat, floor: f64) -> Result<(CMat, usize)> {
    let (vals, vecs) = hermitian_eigen(g);
    let top = vals.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::IndefiniteGram(top));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > floor * top).collect();
    let mut cm = CMat::zeros(g.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let s = 1.0 / vals[i].sqrt();
        for r in 0..g.nrows() {
            cm[(r, col)] = vecs[(r, i)] * s;
        }
    }
    Ok((cm, vals.len() - keep.len()))
}

/// Closed-form `ln ‖b_k‖²` for monomial/Laurent bases on Reinhardt domains.
pub fn closed_form_log_norms(raw: &RawBasis, domain: &DomainSpec) -> Option<Vec<f64>> {
    match (raw, domain.kind()) {
        (RawBasis::Laurent(ks), DomainKind::Annulus { inner_radius }) => {
            Some(ks.iter().map(|&k| ln_laurent_norm(k as i64, *inner_radius)).collect())
        }
        (RawBasis::Monomial(t), DomainKind::Polydisc) => {
            Some(t.list.iter().map(|a| a.iter().map(|&k| PI.ln() - (k as f64 + 1.0).ln()).sum()).collect())
        }
        (RawBasis::Monomial(t), _) => {
            let (cs, ms) = domain.power_sum()?;
            Some(
                t.list
                    .iter()
                    .map(|alpha| {
                        let mut s = 0.0;
                        let mut asum = 0.0;
                        for j in 0..alpha.len() {
                            let m = ms[j] as f64;
                            let a = (alpha[j] as f64 + 1.0) / m;
                            s += PI.ln() - m.ln() - a * cs[j].ln() + ln_gamma(a);
                            asum += a;
                        }
                        s - ln_gamma(1.0 + asum)
                    })
                    .collect(),
            )
        }
        _ => None,
    }
}

/// `ln ‖z^k‖^2` on the annulus `r < |z| < 1`.
pub fn ln_laurent_norm(k: i64, r: f64) -> f64 {
    let lr = r.ln();
    let e = 2.0 * (k as f64 + 1.0);
    if k == -1 {
        (2.0 * PI * -lr).ln()
    } else if e > 0.0 {
        PI.ln() + (-(e * lr).exp()).ln_1p() - (k as f64 + 1.0).ln()
    } else {
        PI.ln() + e * lr + (-(-e * lr).exp()).ln_1p() - (-(k as f64 + 1.0)).ln()
    }
}

/// Distance to the boundary inside which the unit-disc kernel truncated at
/// `degree` misses the closed form by relative error `tol` in any of the
/// kernel, `g_B`, `g_KF` or the curvature of `g_KF`.
pub fn truncation_distance(degree: usize, tol: f64) -> f64 {
    use crate::oracle::RadialKernel;
    let err = |delta: f64| {
        let t = (1.0 - delta).powi(2);
        let a = RadialKernel::TruncatedDisc { degree }.profiles(t);
        let b = RadialKernel::Disc { r2: 1.0 }.profiles(t);
        [(a.kernel, b.kernel), (a.bergman, b.bergman), (a.kf, b.kf), (a.gaussian_kf, b.gaussian_kf)]
            .iter()
            .map(|(x, y)| ((x - y) / y).abs())
            .fold(0.0, |m: f64, e| if e.is_finite() { m.max(e) } else { f64::INFINITY })
    };
    if err(1.0) >= tol {
        return 1.0;
    }
    let (mut lo, mut hi) = (1e-9f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if err(mid) >= tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Truncated orthonormal basis `φ_k` of `A^2(D)`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    spec: BasisSpec,
    domain: DomainSpec,
    raw: RawBasis,
    whitening: Whitening,
    dropped: usize,
    source: String,
}

impl OrthonormalBasis {
    /// Closed-form radial moments on Reinhardt domains, quadrature otherwise.
    pub fn build(domain: &DomainSpec, spec: &BasisSpec) -> Result<Self> {
        spec.check_domain(domain)?;
        if spec.family != BasisFamily::Arnoldi {
            let raw = raw_for(spec, None)?;
            if let Some(logs) = closed_form_log_norms(&raw, domain) {
                let d = logs.iter().map(|l| (-0.5 * l).exp()).collect();
                return Ok(Self {
                    spec: spec.clone(),
                    domain: domain.clone(),
                    raw,
                    whitening: Whitening::Diagonal(d),
                    dropped: 0,
                    source: "closed-form radial moments".into(),
                });
            }
        }
        let res = default_resolution(domain, spec);
        let rule = domain.build_quadrature(res)?;
        Self::from_quadrature(domain, spec, &rule)
    }

    /// Gram matrix under `rule`, whitened with the eigenvalue floor.
    pub fn from_quadrature(domain: &DomainSpec, spec: &BasisSpec, rule: &QuadratureRule) -> Result<Self> {
        spec.check_domain(domain)?;
        let raw = raw_for(spec, Some(rule))?;
        let g = gram_matrix(&raw, rule)?;
        let (whitening, dropped) = if domain.is_reinhardt() || spec.family == BasisFamily::Arnoldi {
            match orthonormalize(&g) {
                Ok(cm) => (cm, 0),
                Err(_) => orthonormalize_floor(&g, EIGEN_FLOOR)?,
            }
        } else {
            orthonormalize_floor(&g, EIGEN_FLOOR)?
        };
        Ok(Self {
            spec: spec.clone(),
            domain: domain.clone(),
            raw,
            whitening: Whitening::Dense(whitening),
            dropped,
            source: rule.descriptor.clone(),
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn raw(&self) -> &RawBasis {
        &self.raw
    }

    pub fn whitening(&self) -> &Whitening {
        &self.whitening
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        match &self.whitening {
            Whitening::Diagonal(d) => d.len(),
            Whitening::Dense(m) => m.ncols(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `‖C^* G C - I‖_max` for the Gram matrix of `rule`.
    pub fn whitening_residual(&self, rule: &QuadratureRule) -> Result<f64> {
        let g = gram_matrix(&self.raw, rule)?;
        let cm = self.whitening.matrix();
        let r = cm.adjoint() * g * &cm;
        Ok(max_abs(&(r - CMat::identity(cm.ncols(), cm.ncols()))))
    }

    /// Row `k`: `∂^a φ_k(z)` for `a` in `table(n, max_order)`.
    pub fn eval(&self, z: &[C64], max_order: usize) -> Result<DMatrix<C64>> {
        if max_order > MAX_ORDER {
            return Err(Error::OrderExceedsSupported(max_order));
        }
        if z.len() != self.spec.n {
            return Err(Error::DimensionMismatch { expected: self.spec.n, got: z.len() });
        }
        if !self.domain.contains(z) {
            return Err(Error::PointOutsideDomain);
        }
        Ok(self.eval_unchecked(z, max_order))
    }

    pub(crate) fn eval_unchecked(&self, z: &[C64], max_order: usize) -> DMatrix<C64> {
        let raw = self.raw.eval(z, max_order);
        self.whitening.apply(&raw)
    }

    /// `Σ_k |φ_k(z)|^2`.
    pub fn kernel_diagonal(&self, z: &[C64]) -> Result<f64> {
        let v = self.eval(z, 0)?;
        Ok(v.column(0).iter().map(|x| x.norm_sqr()).sum())
    }

    /// Boundary distance below which the truncated kernel is not trusted.
    /// On the annulus this is the limit for the outer circle.
    pub fn truncation_distance(&self) -> f64 {
        let scale = self.domain.coordinate_bounds().iter().cloned().fold(f64::INFINITY, f64::min);
        truncation_distance(self.spec.degree, TRUNCATION_TOLERANCE) * scale
    }

    /// Truncation limit that applies at `z` (inner annulus circle scaled by `r`).
    pub fn truncation_limit_at(&self, z: &[C64]) -> f64 {
        let dt = truncation_distance(self.spec.degree, TRUNCATION_TOLERANCE);
        if let DomainKind::Annulus { inner_radius } = self.domain.kind() {
            let a = z[0].norm();
            if a - inner_radius < 1.0 - a {
                return inner_radius * (1.0 / (1.0 - dt) - 1.0);
            }
        }
        self.truncation_distance()
    }

    /// Refuses points closer to the boundary than the truncation limit.
    pub fn check_truncation(&self, z: &[C64]) -> Result<()> {
        let d = self.domain.boundary_distance(z)?;
        let limit = self.truncation_limit_at(z);
        if d < limit {
            Err(Error::TruncationRadiusExceeded { distance: d, limit })
        } else {
            Ok(())
        }
    }

    pub fn within_truncation(&self, z: &[C64]) -> bool {
        self.check_truncation(z).is_ok()
    }

    /// `{family, degree, whitening}` export for reproducibility.
    pub fn export(&self) -> Value {
        let whitening = match &self.whitening {
            Whitening::Diagonal(d) => json!({ "kind": "diagonal", "entries": d }),
            Whitening::Dense(m) => {
                let re: Vec<Vec<f64>> =
                    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
                let im: Vec<Vec<f64>> =
                    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect();
                json!({ "kind": "dense", "re": re, "im": im })
            }
        };
        json!({
            "family": self.spec.family,
            "degree": self.spec.degree,
            "n": self.spec.n,
            "domain": self.domain.to_json().unwrap_or(Value::Null),
            "source": self.source,
            "dropped": self.dropped,
            "truncation_distance": self.truncation_distance(),
            "whitening": whitening,
        })
    }
}

fn raw_for(spec: &BasisSpec, rule: Option<&QuadratureRule>) -> Result<RawBasis> {
    Ok(match spec.family {
        BasisFamily::Monomial => RawBasis::Monomial(table(spec.n, spec.degree)),
        BasisFamily::LaurentMonomial => {
            let k = spec.degree as i32;
            RawBasis::Laurent((-k..=k).collect())
        }
        BasisFamily::Arnoldi => {
            let rule =
                rule.ok_or_else(|| Error::BasisDomainMismatch("Arnoldi basis needs a quadrature rule".into()))?;
            RawBasis::Arnoldi(ArnoldiRecurrence::build(rule, spec.degree)?)
        }
    })
}

fn default_resolution(domain: &DomainSpec, spec: &BasisSpec) -> usize {
    let base = domain.default_quadrature_resolution();
    match domain.dim() {
        1 => base.max(spec.degree + 20),
        _ => base.max(spec.degree / 2 + 4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z1(x: f64, y: f64) -> Vec<C64> {
        vec![C64::new(x, y)]
    }

    #[test]
    fn disc_gram_is_diagonal_radial() {
        let disc = DomainSpec::disc();
        let raw = RawBasis::Monomial(table(1, 1));
        let g = gram_matrix(&raw, &disc.build_quadrature(16).unwrap()).unwrap();
        assert_relative_eq!(g[(0, 0)].re, PI, max_relative = 1e-12);
        assert_relative_eq!(g[(1, 1)].re, PI / 2.0, max_relative = 1e-12);
        assert!(g[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn laurent_inverse_power_norm() {
        let ann = DomainSpec::annulus(0.2).unwrap();
        let raw = RawBasis::Laurent(vec![-1]);
        let g = gram_matrix(&raw, &ann.build_quadrature(40).unwrap()).unwrap();
        assert_relative_eq!(g[(0, 0)].re, 2.0 * PI * (1.0f64 / 0.2).ln(), max_relative = 1e-10);
        let logs = closed_form_log_norms(&raw, &ann).unwrap();
        assert_relative_eq!(logs[0].exp(), 2.0 * PI * 5f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let cases = [
            (DomainSpec::polydisc(2).unwrap(), BasisSpec::monomial(2, 3), 8),
            (DomainSpec::ball(2).unwrap(), BasisSpec::monomial(2, 3), 8),
            (DomainSpec::annulus(0.3).unwrap(), BasisSpec::laurent(4), 24),
            (DomainSpec::ellipsoid(vec![1.0, 2.0], vec![1, 1]).unwrap(), BasisSpec::monomial(2, 2), 8),
        ];
        for (dom, spec, res) in cases {
            let raw = raw_for(&spec, None).unwrap();
            let g = gram_matrix(&raw, &dom.build_quadrature(res).unwrap()).unwrap();
            let logs = closed_form_log_norms(&raw, &dom).unwrap();
            for (k, l) in logs.iter().enumerate() {
                assert_relative_eq!(g[(k, k)].re, l.exp(), max_relative = 1e-9);
            }
        }
        let pd = DomainSpec::polydisc(2).unwrap();
        let raw = RawBasis::Monomial(table(2, 1));
        let logs = closed_form_log_norms(&raw, &pd).unwrap();
        assert_relative_eq!(logs[1].exp(), PI * PI / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn orthonormalize_examples() {
        let id = CMat::identity(3, 3);
        assert!(max_abs(&(orthonormalize(&id).unwrap() - &id)) < 1e-15);
        let g = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(PI), c(PI / 2.0)]));
        let cm = orthonormalize(&g).unwrap();
        assert_relative_eq!(cm[(0, 0)].re, 1.0 / PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(cm[(1, 1)].re, (2.0 / PI).sqrt(), max_relative = 1e-14);
        let g = CMat::from_row_slice(2, 2, &[c(1.0), c(0.5), c(0.5), c(1.0)]);
        let cm = orthonormalize(&g).unwrap();
        assert!(max_abs(&(cm.adjoint() * &g * &cm - CMat::identity(2, 2))) < 1e-12);
        let sing = CMat::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(1.0)]);
        assert!(matches!(orthonormalize(&sing), Err(Error::RankDeficient(_))));
        let (cm, dropped) = orthonormalize_floor(&sing, EIGEN_FLOOR).unwrap();
        assert_eq!((cm.ncols(), dropped), (1, 1));
    }

    #[test]
    fn eval_disc_derivatives() {
        let ob = OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::monomial(1, 5)).unwrap();
        let v = ob.eval(&z1(0.0, 0.0), 3).unwrap();
        assert!(v[(1, 0)].norm() < 1e-15);
        assert_relative_eq!(v[(1, 1)].re, (2.0 / PI).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(v[(3, 3)].re, 12.0 / PI.sqrt(), max_relative = 1e-14);
        for m in 1..=3 {
            assert_eq!(v[(0, m)], czero());
        }
        assert!(matches!(ob.eval(&z1(0.0, 0.0), 4), Err(Error::OrderExceedsSupported(4))));
    }

    #[test]
    fn disc_reconstruction_and_whitening() {
        let disc = DomainSpec::disc();
        let spec = BasisSpec::monomial(1, 30);
        let ob = OrthonormalBasis::build(&disc, &spec).unwrap();
        for r in [0.0, 0.3, 0.5, 0.7] {
            let z = z1(r * 0.6, r * 0.8);
            let exact = 1.0 / (PI * (1.0 - r * r).powi(2));
            assert_relative_eq!(ob.kernel_diagonal(&z).unwrap(), exact, max_relative = 1e-6);
        }
        let rule = disc.build_quadrature(40).unwrap();
        assert!(ob.whitening_residual(&rule).unwrap() < 1e-8);
        let quad = OrthonormalBasis::from_quadrature(&disc, &spec, &rule).unwrap();
        assert!(quad.whitening().is_diagonal(1e-8));
    }

    #[test]
    fn arnoldi_on_segment_is_orthonormal() {
        let seg = DomainSpec::circular_segment(0.25).unwrap();
        let rule = seg.build_quadrature(60).unwrap();
        let ob = OrthonormalBasis::from_quadrature(&seg, &BasisSpec::arnoldi(40), &rule).unwrap();
        assert!(ob.whitening_residual(&rule).unwrap() < 1e-8);
        assert_eq!(ob.dropped(), 0);
        let z = z1(0.6, 0.1);
        let v = ob.eval(&z, 1).unwrap();
        let h = 1e-6;
        let vp = ob.eval(&z1(0.6 + h, 0.1), 0).unwrap();
        let vm = ob.eval(&z1(0.6 - h, 0.1), 0).unwrap();
        for k in [5, 20, 40] {
            let fd = (vp[(k, 0)] - vm[(k, 0)]) / (2.0 * h);
            assert!((fd - v[(k, 1)]).norm() < 1e-5 * v[(k, 1)].norm().max(1.0));
        }
    }

    #[test]
    fn truncation_distances() {
        use crate::oracle::RadialKernel;
        let d30 = truncation_distance(30, 1e-3);
        let d200 = truncation_distance(200, 1e-3);
        assert!(d200 < d30 && d30 < 0.5);
        // the kernel term alone is never the binding one
        let x = (1.0 - d30).powi(2);
        assert!(x.powi(31) * (32.0 - 31.0 * x) < 1e-3);
        let t = (1.0 - d200).powi(2);
        let a = RadialKernel::TruncatedDisc { degree: 200 }.profiles(t);
        assert_relative_eq!(a.gaussian_kf, -1.0 / 3.0, max_relative = 1.01e-3);
        let ob = OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::monomial(1, 40)).unwrap();
        assert!(ob.check_truncation(&z1(0.7, 0.0)).is_ok());
        assert!(matches!(ob.check_truncation(&z1(0.99, 0.0)), Err(Error::TruncationRadiusExceeded { .. })));
    }

    #[test]
    fn mismatches_are_rejected() {
        assert!(matches!(
            OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::laurent(3)),
            Err(Error::BasisDomainMismatch(_))
        ));
        assert!(matches!(
            OrthonormalBasis::build(&DomainSpec::ball(2).unwrap(), &BasisSpec::monomial(1, 3)),
            Err(Error::BasisDomainMismatch(_))
        ));
    }
}
