//! Maximal domain functions as finite-dimensional extremal problems over a
//! truncated Bergman space, and the identities linking them to the metrics.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::basis::OrthonormalBasis;
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::jet::table;
use crate::linalg::{c, cholesky_lower, hermitian_eigen, hpd_inverse, orthonormal_columns, quadratic, CMat, CVec};
use crate::metrics::{bergman_metric, kernel_jet_with, KernelJet, MetricPipeline, METRIC_FLOOR};
use crate::oracle::Biholomorphism;

/// Vanishing conditions at `z0`: every derivative of order `≤ max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub z0: Vec<C64>,
    pub max_order: Option<usize>,
}

impl ConstraintSet {
    pub fn none(z0: &[C64]) -> Self {
        Self { z0: z0.to_vec(), max_order: None }
    }

    /// `A_{k+1}(z0)`: value and derivatives up to order `k` vanish.
    pub fn vanishing_to(z0: &[C64], k: usize) -> Self {
        Self { z0: z0.to_vec(), max_order: Some(k) }
    }
}

/// `{c : R c = 0}` inside the coefficient space of an orthonormal basis,
/// stored through an orthonormal basis `W` of its complement.
#[derive(Debug, Clone)]
pub struct RestrictedSubspace {
    pub ambient: usize,
    pub complement: CMat,
    /// Constraint rows `R`, one per vanishing functional.
    pub rows: CMat,
}

impl RestrictedSubspace {
    pub fn rank(&self) -> usize {
        self.complement.ncols()
    }

    pub fn dim(&self) -> usize {
        self.ambient - self.rank()
    }

    /// `P x = x - W W^* x`, applied twice.
    pub fn project(&self, x: &CVec) -> CVec {
        let mut y = x.clone();
        for _ in 0..2 {
            let p = self.complement.adjoint() * &y;
            y -= &self.complement * p;
        }
        y
    }

    /// Explicit orthonormal columns spanning the subspace.
    pub fn spanning_set(&self) -> CMat {
        let m = self.ambient;
        let p = CMat::identity(m, m) - &self.complement * self.complement.adjoint();
        let (vals, vecs) = hermitian_eigen(&p);
        let keep: Vec<usize> = (0..m).filter(|&i| vals[i] > 0.5).collect();
        CMat::from_fn(m, keep.len(), |r, k| vecs[(r, keep[k])])
    }

    /// `max_i |R_i c|`.
    pub fn residual(&self, coeffs: &CVec) -> f64 {
        (&self.rows * coeffs).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Null space of the constraint functionals `f ↦ ∂^a f(z0)`.
pub fn restricted_subspace(ob: &OrthonormalBasis, cs: &ConstraintSet) -> Result<RestrictedSubspace> {
    let m = ob.len();
    let Some(k) = cs.max_order else {
        return Ok(RestrictedSubspace { ambient: m, complement: CMat::zeros(m, 0), rows: CMat::zeros(0, m) });
    };
    let phi = ob.eval(&cs.z0, k)?;
    let rows = phi.transpose();
    if rows.nrows() >= m {
        return Err(Error::EmptySubspace);
    }
    let complement = orthonormal_columns(&rows.map(|x| x.conj()).transpose(), 1e-12);
    if complement.ncols() >= m {
        return Err(Error::EmptySubspace);
    }
    Ok(RestrictedSubspace { ambient: m, complement, rows })
}

#[derive(Debug, Clone)]
pub struct ExtremalResult {
    /// Sum over an orthonormal basis of the constrained subspace; equals the
    /// supremum whenever the functional has rank one (always for `I'`, `I''`
    /// and for `I` in dimension one).
    pub value: f64,
    /// Supremum over unit-norm candidates.
    pub sup_value: f64,
    /// Maximizer coefficients in the orthonormal basis.
    pub maximizer: CVec,
    pub constraint_residual: f64,
}

impl ExtremalResult {
    pub fn maximizer_norm(&self) -> f64 {
        self.maximizer.norm()
    }
}

fn column(phi: &CMat, col: usize) -> CVec {
    phi.column(col).into_owned()
}

/// `I_D(z0, u)` from the rank-`n` form `M = Λ^{-1} Y^* Y Λ^{-*}` built from the
/// functionals `f ↦ (f''(z0) u)_β` on `A_2(z0)`, with `G_B = Λ Λ^*`.
/// `value` is `tr M`, the form summed over an orthonormal basis of `A_2(z0)`,
/// which is the quantity entering the Ricci identity; `sup_value` is `λ_max(M)`
/// and the maximizer is its eigenvector.
pub fn i_domain(ob: &OrthonormalBasis, jet: &KernelJet, z0: &[C64], u: &[C64]) -> Result<ExtremalResult> {
    let n = z0.len();
    let gb = bergman_metric(jet)?.g;
    let lam = cholesky_lower(&gb).ok_or(Error::SingularMetric)?;
    let lam_inv = lam.try_inverse().ok_or(Error::SingularMetric)?;
    let sub = restricted_subspace(ob, &ConstraintSet::vanishing_to(z0, 1))?;
    if sub.dim() == 0 {
        return Err(Error::EmptySubspace);
    }
    let phi = ob.eval(z0, 2)?;
    let t = table(n, 2);
    // Y[:, β] = P conj(L_β) where L_β[k] = Σ_α u_α ∂_α∂_β φ_k(z0).
    let mut y = CMat::zeros(ob.len(), n);
    for b in 0..n {
        let mut l = CVec::zeros(ob.len());
        for (a, ua) in u.iter().enumerate() {
            let mut idx = vec![0usize; n];
            idx[a] += 1;
            idx[b] += 1;
            let col = t.index_of(&idx).unwrap();
            l += column(&phi, col) * *ua;
        }
        y.set_column(b, &sub.project(&l.map(|x| x.conj())));
    }
    let m = &lam_inv * (y.adjoint() * &y) * lam_inv.adjoint();
    let (vals, vecs) = hermitian_eigen(&m);
    let value = vals.iter().map(|v| v.max(0.0)).sum();
    let sup_value = vals[n - 1].max(0.0);
    let e = column(&vecs, n - 1);
    let mut x = &y * (lam_inv.adjoint() * e);
    let nx = x.norm();
    if nx > 0.0 {
        x /= c(nx);
    }
    let constraint_residual = sub.residual(&x);
    Ok(ExtremalResult { value, sup_value, maximizer: x, constraint_residual })
}

/// Representer of `f ↦ f^{(k)}(z0)` projected onto the subspace.
fn projected_representer(ob: &OrthonormalBasis, sub: &RestrictedSubspace, z0: &[C64], k: usize) -> Result<CVec> {
    let phi = ob.eval(z0, k)?;
    Ok(sub.project(&column(&phi, k).map(|x| x.conj())))
}

fn planar(jet: &KernelJet) -> Result<f64> {
    if jet.dim() != 1 {
        return Err(Error::DimensionNotOne(jet.dim()));
    }
    Ok(MetricPipeline::new(jet)?.kf()?.g[(0, 0)].re)
}

fn representer_result(sub: &RestrictedSubspace, r: CVec, scale: f64) -> ExtremalResult {
    let nr = r.norm();
    let maximizer = if nr > 0.0 { &r / c(nr) } else { r.clone() };
    let value = nr * nr / scale;
    ExtremalResult { value, sup_value: value, constraint_residual: sub.residual(&maximizer), maximizer }
}

/// `I'_D(z0) = sup { |f'(z0)|^2 / g_KF(z0) : f ∈ A_1(z0), ‖f‖ = 1 }`.
pub fn i_prime(ob: &OrthonormalBasis, jet: &KernelJet, z0: &[C64]) -> Result<ExtremalResult> {
    let g = planar(jet)?;
    let sub = restricted_subspace(ob, &ConstraintSet::vanishing_to(z0, 0))?;
    let r = projected_representer(ob, &sub, z0, 1)?;
    Ok(representer_result(&sub, r, g))
}

/// `I''_D(z0) = sup { |f'''(z0)|^2 / g_KF(z0)^3 : f ∈ A_3(z0), ‖f‖ = 1 }`.
pub fn i_double_prime(ob: &OrthonormalBasis, jet: &KernelJet, z0: &[C64]) -> Result<ExtremalResult> {
    let g = planar(jet)?;
    let sub = restricted_subspace(ob, &ConstraintSet::vanishing_to(z0, 2))?;
    let r = projected_representer(ob, &sub, z0, 3)?;
    Ok(representer_result(&sub, r, g * g * g))
}

/// `τ_KF = sqrt(I / K)`.
pub fn kf_length_from_i(i: f64, k: f64) -> f64 {
    (i / k).max(0.0).sqrt()
}

/// `Ric(z, u) = (n+1) - I / (τ_B^2 K)`.
pub fn ricci_from_i(i: f64, tau_b: f64, k: f64, n: usize) -> f64 {
    (n + 1) as f64 - i / (tau_b * tau_b * k)
}

/// `R_KF = 2 - I'/K - I''/I'`.
pub fn curvature_from_i(i1: f64, i2: f64, k: f64) -> f64 {
    2.0 - i1 / k - i2 / i1
}

/// Residuals `|I'_src(z0) - I'_tgt(F z0)|F'(z0)|^2|` and the analogue for `I''`.
pub fn transform_i_check(
    f: &dyn Biholomorphism,
    src: &OrthonormalBasis,
    tgt: &OrthonormalBasis,
    z0: &[C64],
    force: bool,
) -> Result<(f64, f64)> {
    let w0 = f.apply(z0)?;
    let d = f.jacobian(z0)?[(0, 0)].norm_sqr();
    let js = kernel_jet_with(src, z0, 3, force)?;
    let jt = kernel_jet_with(tgt, &w0, 3, force)?;
    let r1 = (i_prime(src, &js, z0)?.value - i_prime(tgt, &jt, &w0)?.value * d).abs();
    let r2 = (i_double_prime(src, &js, z0)?.value - i_double_prime(tgt, &jt, &w0)?.value * d).abs();
    Ok((r1, r2))
}

/// `Q` and `d` with `Q^T G1 conj(Q) = diag(d)` and `Q^T G2 conj(Q) = I`.
pub fn simultaneous_diagonalize(g1: &CMat, g2: &CMat) -> Result<(CMat, Vec<f64>)> {
    for g in [g1, g2] {
        if hpd_inverse(g, 0.0).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
    }
    let l = cholesky_lower(g2).ok_or(Error::NotPositiveDefinite)?;
    let linv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let m = &linv * g1 * linv.adjoint();
    let (d, w) = hermitian_eigen(&m);
    let q = linv.transpose() * w.map(|x| x.conj());
    Ok((q, d))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityReport {
    pub tau2_large: f64,
    pub tau2_bound: f64,
    pub dual_large: f64,
    pub dual_bound: f64,
    /// `τ²_KF,D1 ≤ (K2/K1)^{n+1} (J2/J1) τ²_KF,D2`.
    pub metric_inequality: bool,
    /// `u^T conj(G_KF,D1)^{-1} ū ≥ (K1/K2)^{n+1} (J1/J2) u^T conj(G_KF,D2)^{-1} ū`.
    pub dual_inequality: bool,
}

pub const MONOTONICITY_SLACK: f64 = 1e-6;

/// Compares the Kobayashi-Fuks data of `D2 ⊂ D1` at a common point.
pub fn monotonicity_check(
    d1: &DomainSpec,
    p1: &MetricPipeline,
    d2: &DomainSpec,
    p2: &MetricPipeline,
    u: &[C64],
) -> Result<MonotonicityReport> {
    let rule = d2.build_quadrature(8)?;
    if rule.nodes.iter().any(|z| !d1.contains(z)) {
        return Err(Error::ContainmentViolated);
    }
    let n = p1.dim();
    let (k1, k2) = (p1.kernel, p2.kernel);
    let (j1, j2) = (p1.canonical_invariant(), p2.canonical_invariant());
    let g1 = p1.kf()?.g;
    let g2 = p2.kf()?.g;
    let tau2_large = quadratic(&g1, u).re;
    let tau2_bound = (k2 / k1).powi(n as i32 + 1) * (j2 / j1) * quadratic(&g2, u).re;
    let inv = |g: &CMat| hpd_inverse(&g.map(|x| x.conj()), METRIC_FLOOR).ok_or(Error::SingularMetric);
    let dual_large = quadratic(&inv(&g1)?, u).re;
    let dual_bound = (k1 / k2).powi(n as i32 + 1) * (j1 / j2) * quadratic(&inv(&g2)?, u).re;
    Ok(MonotonicityReport {
        tau2_large,
        tau2_bound,
        dual_large,
        dual_bound,
        metric_inequality: tau2_large <= tau2_bound * (1.0 + MONOTONICITY_SLACK),
        dual_inequality: dual_large >= dual_bound * (1.0 - MONOTONICITY_SLACK),
    })
}

/// One step of the localization experiment.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationRecord {
    pub delta: f64,
    pub ratio_tau: f64,
    pub ratio_det: f64,
    pub ratio_curv: f64,
    pub ratio_i: f64,
    pub inside_truncation_layer: bool,
}

/// Ratios of Kobayashi-Fuks data of `D` and of `U ∩ D` at `p0 - δ ν`,
/// where `ν` is the outward unit normal at the planar boundary point `p0`.
pub fn localization_experiment(
    big: &OrthonormalBasis,
    local: &OrthonormalBasis,
    p0: C64,
    deltas: &[f64],
    force: bool,
) -> Result<Vec<LocalizationRecord>> {
    if big.spec().n != 1 || local.spec().n != 1 {
        return Err(Error::DimensionNotOne(big.spec().n.max(local.spec().n)));
    }
    let frame = big.domain().boundary_frame(&[p0 * (1.0 - 1e-9)]).ok();
    let nu = frame.map(|f| f.normal[0]).unwrap_or(p0 / p0.norm());
    let mut out = Vec::new();
    for &delta in deltas {
        let z = [p0 - nu * delta];
        let jb = kernel_jet_with(big, &z, 3, force)?;
        let jl = kernel_jet_with(local, &z, 3, force)?;
        let pb = MetricPipeline::new(&jb)?;
        let pl = MetricPipeline::new(&jl)?;
        let gb = pb.kf()?.g[(0, 0)].re;
        let gl = pl.kf()?.g[(0, 0)].re;
        let rb = crate::metrics::gaussian_curvature_kf(&jb)?;
        let rl = crate::metrics::gaussian_curvature_kf(&jl)?;
        let u = [c(1.0)];
        let ib = i_domain(big, &jb, &z, &u)?.value;
        let il = i_domain(local, &jl, &z, &u)?.value;
        out.push(LocalizationRecord {
            delta,
            ratio_tau: (gb / gl).sqrt(),
            ratio_det: gb / gl,
            ratio_curv: (2.0 - rb) / (2.0 - rl),
            ratio_i: ib / il,
            inside_truncation_layer: jb.inside_truncation_layer || jl.inside_truncation_layer,
        });
    }
    Ok(out)
}

pub fn write_localization_csv<W: Write>(records: &[LocalizationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "delta,ratio_tau,ratio_det,ratio_curv,ratio_i,truncated")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            crate::fmt17(r.delta),
            crate::fmt17(r.ratio_tau),
            crate::fmt17(r.ratio_det),
            crate::fmt17(r.ratio_curv),
            crate::fmt17(r.ratio_i),
            r.inside_truncation_layer
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::metrics::kernel_jet;
    use crate::oracle::DiscMobius;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn disc(deg: usize) -> OrthonormalBasis {
        OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::monomial(1, deg)).unwrap()
    }

    #[test]
    fn disc_subspaces() {
        let ob = disc(10);
        let z0 = [c(0.0)];
        assert_eq!(restricted_subspace(&ob, &ConstraintSet::none(&z0)).unwrap().dim(), 11);
        let s = restricted_subspace(&ob, &ConstraintSet::vanishing_to(&z0, 0)).unwrap();
        let span = s.spanning_set();
        assert_eq!(span.ncols(), 10);
        assert!(span.row(0).iter().all(|x| x.norm() < 1e-12));
        let s = restricted_subspace(&ob, &ConstraintSet::vanishing_to(&z0, 2)).unwrap();
        let span = s.spanning_set();
        for k in 0..3 {
            assert!(span.row(k).iter().all(|x| x.norm() < 1e-12));
        }
        let small = disc(1);
        assert!(matches!(restricted_subspace(&small, &ConstraintSet::vanishing_to(&z0, 1)), Err(Error::EmptySubspace)));
    }

    #[test]
    fn disc_center_values() {
        let ob = disc(20);
        let z0 = [c(0.0)];
        let jet = kernel_jet(&ob, &z0, 3).unwrap();
        let i = i_domain(&ob, &jet, &z0, &[c(1.0)]).unwrap();
        assert_relative_eq!(i.value, 6.0 / PI, max_relative = 1e-13);
        assert_relative_eq!(i.maximizer_norm(), 1.0, max_relative = 1e-12);
        assert!(i.constraint_residual < 1e-12);
        let i1 = i_prime(&ob, &jet, &z0).unwrap();
        let i2 = i_double_prime(&ob, &jet, &z0).unwrap();
        assert_relative_eq!(i1.value, 1.0 / (3.0 * PI), max_relative = 1e-12);
        assert_relative_eq!(i2.value, 2.0 / (3.0 * PI), max_relative = 1e-12);
        let k = jet.kernel();
        assert_relative_eq!(kf_length_from_i(i.value, k), 6f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ricci_from_i(i.value, 2f64.sqrt(), k, 1), -1.0, max_relative = 1e-12);
        assert_relative_eq!(curvature_from_i(i1.value, i2.value, k), -1.0 / 3.0, max_relative = 1e-12);
        let i3 = i_domain(&ob, &jet, &z0, &[C64::new(0.0, 2.0)]).unwrap();
        assert_relative_eq!(i3.value, 4.0 * i.value, max_relative = 1e-13);
    }

    #[test]
    fn ball_center_value() {
        let ob = OrthonormalBasis::build(&DomainSpec::ball(2).unwrap(), &BasisSpec::monomial(2, 8)).unwrap();
        let z0 = [c(0.0), c(0.0)];
        let jet = kernel_jet(&ob, &z0, 3).unwrap();
        let s = 0.5f64.sqrt();
        let i = i_domain(&ob, &jet, &z0, &[C64::new(s, 0.0), C64::new(0.0, s)]).unwrap();
        assert_relative_eq!(i.value, 24.0 / (PI * PI), max_relative = 1e-12);
        assert_relative_eq!(i.sup_value, 16.0 / (PI * PI), max_relative = 1e-12);
        assert!(i.constraint_residual < 1e-10);
    }

    #[test]
    fn mobius_and_rotation_transform() {
        let ob = disc(120);
        let f = DiscMobius { a: c(0.3) };
        let (r1, r2) = transform_i_check(&f, &ob, &ob, &[c(0.0)], false).unwrap();
        assert!(r1 < 1e-6 && r2 < 1e-6, "{r1} {r2}");
        let rot = crate::oracle::LinearMap { u: CMat::from_element(1, 1, C64::from_polar(1.0, 0.7)) };
        let (r1, r2) = transform_i_check(&rot, &ob, &ob, &[C64::new(0.2, 0.1)], false).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-10);
    }

    #[test]
    fn simultaneous_diagonalization_examples() {
        let id = CMat::identity(2, 2);
        let (_, d) = simultaneous_diagonalize(&id, &id).unwrap();
        assert!(d.iter().all(|x| (x - 1.0).abs() < 1e-14));
        let (q, d) = simultaneous_diagonalize(&(id.clone() * c(2.0)), &id).unwrap();
        assert!(d.iter().all(|x| (x - 2.0).abs() < 1e-14));
        assert!((q.transpose() * q.map(|x| x.conj()) - &id).norm() < 1e-13);
        let bad = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1.0)]));
        assert!(matches!(simultaneous_diagonalize(&bad, &id), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn scaled_disc_monotonicity() {
        let d1 = DomainSpec::scaled_disc(1.2).unwrap();
        let d2 = DomainSpec::disc();
        let b1 = OrthonormalBasis::build(&d1, &BasisSpec::monomial(1, 60)).unwrap();
        let b2 = disc(60);
        for z in [c(0.0), c(0.4)] {
            let p1 = MetricPipeline::new(&kernel_jet(&b1, &[z], 3).unwrap()).unwrap();
            let p2 = MetricPipeline::new(&kernel_jet(&b2, &[z], 3).unwrap()).unwrap();
            let r = monotonicity_check(&d1, &p1, &d2, &p2, &[c(1.0)]).unwrap();
            assert!(r.metric_inequality && r.dual_inequality);
            let same = monotonicity_check(&d2, &p2, &d2, &p2, &[c(1.0)]).unwrap();
            assert_relative_eq!(same.tau2_large, same.tau2_bound, max_relative = 1e-12);
            assert!(same.metric_inequality && same.dual_inequality);
            assert!(matches!(monotonicity_check(&d2, &p2, &d1, &p1, &[c(1.0)]), Err(Error::ContainmentViolated)));
        }
    }
}
