//! Normalizing coordinates at a strongly pseudoconvex boundary point, the
//! scaling maps built from them, and the boundary-asymptotics experiment.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::OrthonormalBasis;
use crate::domain::{bracket_root, complement_frame, DefiningFunction, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::fmt17;
use crate::linalg::{c, czero, hermitian_eigen, inverse, max_abs, norm, quadratic, CMat, CVec};
use crate::metrics::{gaussian_curvature_kf, hermitian_form, kernel_jet_with, Flavor, MetricPipeline};
use crate::oracle::{oracle_metric, pullback, Biholomorphism, RadialKernel};

/// Tolerance for `S_j(p^j) = b*`.
pub const BASE_POINT_TOL: f64 = 1e-8;

/// The base point `b* = ('0, -1)` of the scaled domains.
pub fn base_point(n: usize) -> Point {
    let mut b = vec![czero(); n];
    b[n - 1] = c(-1.0);
    b
}

fn conj_mat(m: &CMat) -> CMat {
    m.map(|x| x.conj())
}

/// `M^{p}` for a Hermitian positive-definite `M`.
fn hermitian_power(vals: &[f64], vecs: &CMat, p: f64) -> CMat {
    let d = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|v| c(v.powf(p)))));
    vecs * d * vecs.adjoint()
}

fn block(m: &CMat, k: usize) -> CMat {
    m.view((0, 0), (k, k)).into_owned()
}

fn apply(m: &CMat, v: &[C64]) -> Point {
    (m * CVec::from_column_slice(v)).iter().cloned().collect()
}

/// `Σ_{μ,ν<n} a_{μν} z_μ z_ν`.
fn tangential_quadratic(a: &CMat, z: &[C64]) -> C64 {
    let k = a.nrows();
    let mut s = czero();
    for i in 0..k {
        for j in 0..k {
            s += a[(i, j)] * z[i] * z[j];
        }
    }
    s
}

/// Jacobian of `x ↦ ('x, x_n + s·Σ a x_μ x_ν)` at `x`.
fn quadratic_shear_jacobian(a: &CMat, x: &[C64], s: f64) -> CMat {
    let n = x.len();
    let mut j = CMat::identity(n, n);
    for mu in 0..n - 1 {
        let mut d = czero();
        for nu in 0..n - 1 {
            d += a[(mu, nu)] * x[nu];
        }
        j[(n - 1, mu)] = d * (2.0 * s);
    }
    j
}

/// Holomorphic chart `w = φ₂(S(z - p⁰))` in which `p⁰ = 0`, the defining
/// function (divided by `|∇_z̄ρ(p⁰)|`) reads `2 Re w_n + |'w|² + ...` and
/// carries no pure tangential `w_μ w_ν` terms.
#[derive(Debug, Clone)]
pub struct NormalizingChart {
    rho: Arc<dyn DefiningFunction>,
    p0: Point,
    scale: f64,
    s: CMat,
    s_inv: CMat,
    quad: CMat,
}

impl NormalizingChart {
    pub fn new(rho: Arc<dyn DefiningFunction>, p0: &[C64]) -> Result<Self> {
        let n = rho.dim();
        if p0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p0.len() });
        }
        let value = rho.value(p0);
        if value.abs() > 1e-8 {
            return Err(Error::InvalidDomain(format!("base point is not on the boundary (rho = {value:.3e})")));
        }
        let g = rho.grad_zbar(p0);
        let scale = norm(&g);
        if scale < 1e-12 {
            return Err(Error::DegenerateGradient(scale));
        }
        let nu: Vec<C64> = g.iter().map(|x| x / scale).collect();
        let frame = complement_frame(&nu);
        let mut r = CMat::zeros(n, n);
        for (i, t) in frame.iter().enumerate() {
            for k in 0..n {
                r[(i, k)] = t[k].conj();
            }
        }
        for k in 0..n {
            r[(n - 1, k)] = nu[k].conj();
        }
        let ra = r.adjoint();
        let levi = ra.transpose() * rho.hess_zzbar(p0) * conj_mat(&ra) / c(scale);
        let mut stretch = CMat::identity(n, n);
        if n > 1 {
            let (vals, vecs) = hermitian_eigen(&block(&levi, n - 1));
            if vals[0] <= 0.0 {
                return Err(Error::NotStronglyPseudoconvex(vals[0]));
            }
            let a_inv = conj_mat(&hermitian_power(&vals, &vecs, 0.5));
            stretch.view_mut((0, 0), (n - 1, n - 1)).copy_from(&a_inv);
        }
        let s = stretch * r;
        let s_inv = inverse(&s).ok_or(Error::SingularMetric)?;
        let hxx = s_inv.transpose() * rho.hess_zz(p0) * &s_inv / c(scale);
        let quad = if n > 1 { block(&hxx, n - 1) * c(0.5) } else { CMat::zeros(0, 0) };
        Ok(Self { rho, p0: p0.to_vec(), scale, s, s_inv, quad })
    }

    pub fn for_domain(d: &DomainSpec, p0: &[C64]) -> Result<Self> {
        Self::new(d.defining_function(), p0)
    }

    pub fn dim(&self) -> usize {
        self.p0.len()
    }

    pub fn base(&self) -> &[C64] {
        &self.p0
    }

    /// `|∇_z̄ρ(p⁰)|`, the factor dividing ρ in the chart.
    pub fn gradient_scale(&self) -> f64 {
        self.scale
    }

    /// Affine part `S` of the chart.
    pub fn affine(&self) -> &CMat {
        &self.s
    }

    /// Coefficients `a_{μν}` of the quadratic shear.
    pub fn shear(&self) -> &CMat {
        &self.quad
    }

    pub fn to_chart(&self, z: &[C64]) -> Point {
        let d: Vec<C64> = z.iter().zip(&self.p0).map(|(a, b)| a - b).collect();
        let mut w = apply(&self.s, &d);
        let n = w.len();
        let q = tangential_quadratic(&self.quad, &w);
        w[n - 1] += q;
        w
    }

    pub fn from_chart(&self, w: &[C64]) -> Point {
        let mut x = w.to_vec();
        let n = x.len();
        x[n - 1] -= tangential_quadratic(&self.quad, w);
        apply(&self.s_inv, &x).iter().zip(&self.p0).map(|(a, b)| a + b).collect()
    }

    /// `∂z/∂w` at the chart point `w`.
    pub fn jacobian_from_chart(&self, w: &[C64]) -> CMat {
        &self.s_inv * quadratic_shear_jacobian(&self.quad, w, -1.0)
    }

    /// `∂w/∂z` at the original point `z`.
    pub fn jacobian_to_chart(&self, z: &[C64]) -> CMat {
        let d: Vec<C64> = z.iter().zip(&self.p0).map(|(a, b)| a - b).collect();
        let x = apply(&self.s, &d);
        quadratic_shear_jacobian(&self.quad, &x, 1.0) * &self.s
    }

    /// The normalized defining function in chart coordinates.
    pub fn chart_rho(&self) -> ChartRho {
        ChartRho { chart: self.clone() }
    }
}

impl Biholomorphism for NormalizingChart {
    fn dim(&self) -> usize {
        self.p0.len()
    }

    fn apply(&self, z: &[C64]) -> Result<Point> {
        Ok(self.to_chart(z))
    }

    fn jacobian(&self, z: &[C64]) -> Result<CMat> {
        Ok(self.jacobian_to_chart(z))
    }
}

/// `ρ(z(w)) / |∇_z̄ρ(p⁰)|`, differentiated exactly through the chart.
#[derive(Debug, Clone)]
pub struct ChartRho {
    chart: NormalizingChart,
}

impl DefiningFunction for ChartRho {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn value(&self, w: &[C64]) -> f64 {
        self.chart.rho.value(&self.chart.from_chart(w)) / self.chart.scale
    }

    fn grad_z(&self, w: &[C64]) -> Vec<C64> {
        let z = self.chart.from_chart(w);
        let g = CVec::from_vec(self.chart.rho.grad_z(&z));
        let j = self.chart.jacobian_from_chart(w);
        (j.transpose() * g).iter().map(|x| x / self.chart.scale).collect()
    }

    fn hess_zz(&self, w: &[C64]) -> CMat {
        let ch = &self.chart;
        let n = ch.dim();
        let z = ch.from_chart(w);
        let j = ch.jacobian_from_chart(w);
        let mut h = j.transpose() * ch.rho.hess_zz(&z) * &j;
        let g = ch.rho.grad_z(&z);
        // ∂²z/∂w_μ∂w_ν = -2 a_{μν} S⁻¹e_n for μ, ν < n.
        let mut gcol = czero();
        for k in 0..n {
            gcol += g[k] * ch.s_inv[(k, n - 1)];
        }
        for mu in 0..n - 1 {
            for nu in 0..n - 1 {
                h[(mu, nu)] -= gcol * ch.quad[(mu, nu)] * 2.0;
            }
        }
        h / c(ch.scale)
    }

    fn hess_zzbar(&self, w: &[C64]) -> CMat {
        let ch = &self.chart;
        let z = ch.from_chart(w);
        let j = ch.jacobian_from_chart(w);
        j.transpose() * ch.rho.hess_zzbar(&z) * conj_mat(&j) / c(ch.scale)
    }
}

/// Nearest boundary point to `t` by the fixed point `ζ = t + s·ν(ζ)`.
pub fn project_to_boundary(rho: &dyn DefiningFunction, t: &[C64]) -> Result<Point> {
    let reach = 1.0 + norm(t);
    let along = |nu: &[C64], s: f64| -> Point { t.iter().zip(nu).map(|(a, b)| a + b * s).collect() };
    let mut zeta = t.to_vec();
    for _ in 0..200 {
        let g = rho.grad_zbar(&zeta);
        let ng = norm(&g);
        if ng < 1e-14 {
            return Err(Error::NearestPointFailed);
        }
        let nu: Vec<C64> = g.iter().map(|x| x / ng).collect();
        let s = if rho.value(t) < 0.0 {
            bracket_root(|s| rho.value(&along(&nu, s)), reach).ok_or(Error::NearestPointFailed)?
        } else {
            -bracket_root(|s| -rho.value(&along(&nu, -s)), reach).ok_or(Error::NearestPointFailed)?
        };
        let next = along(&nu, s);
        let step = norm(&next.iter().zip(&zeta).map(|(a, b)| a - b).collect::<Vec<_>>());
        zeta = next;
        if step < 1e-15 * reach {
            return Ok(zeta);
        }
    }
    Err(Error::NearestPointFailed)
}

/// The normalizing maps `φ₁, φ₂, φ₃` at a boundary point `ζ` and their
/// composition `h^ζ`.
#[derive(Debug, Clone)]
pub struct PinchukFrame {
    pub zeta: Point,
    /// `∇_z̄ρ(ζ)`.
    pub gradient: Vec<C64>,
    /// Matrix of `φ₁`; `φ₁(z) = P(z - ζ)`.
    pub phi1: CMat,
    /// `a_{μν}` after `φ₁`, `μ, ν < n`.
    pub quad: CMat,
    /// Hermitian form after `φ₂` on the tangential block.
    pub levi: CMat,
    /// Eigenvectors of `levi`.
    pub unitary: CMat,
    pub eigenvalues: Vec<f64>,
    /// `diag(λ^{-1/2})`.
    pub stretch: CMat,
    /// `A` with `H(A'z, 0) = |'z|²`.
    pub a: CMat,
    a_inv: CMat,
}

impl PinchukFrame {
    pub fn at(rho: &dyn DefiningFunction, zeta: &[C64]) -> Result<Self> {
        let n = rho.dim();
        let gz = rho.grad_z(zeta);
        let gzb: Vec<C64> = gz.iter().map(|x| x.conj()).collect();
        if gzb[n - 1].norm() < 1e-12 {
            return Err(Error::DegenerateGradient(gzb[n - 1].norm()));
        }
        let mut p = CMat::zeros(n, n);
        for j in 0..n - 1 {
            p[(j, j)] = gzb[n - 1];
            p[(j, n - 1)] = -gzb[j];
        }
        for k in 0..n {
            p[(n - 1, k)] = gz[k];
        }
        let b = inverse(&p).ok_or(Error::DegenerateGradient(0.0))?;
        let hzz = b.transpose() * rho.hess_zz(zeta) * &b;
        let hzzb = b.transpose() * rho.hess_zzbar(zeta) * conj_mat(&b);
        let k = n - 1;
        let quad = block(&hzz, k) * c(0.5);
        let levi = block(&hzzb, k);
        let (eigenvalues, unitary) = if k > 0 { hermitian_eigen(&levi) } else { (Vec::new(), CMat::zeros(0, 0)) };
        if eigenvalues.first().is_some_and(|&l| l <= 0.0) {
            return Err(Error::LeviNotPositive);
        }
        let stretch = CMat::from_diagonal(&CVec::from_iterator(k, eigenvalues.iter().map(|l| c(l.powf(-0.5)))));
        let a = conj_mat(&hermitian_power(&eigenvalues, &unitary, -0.5));
        let a_inv = conj_mat(&hermitian_power(&eigenvalues, &unitary, 0.5));
        Ok(Self { zeta: zeta.to_vec(), gradient: gzb, phi1: p, quad, levi, unitary, eigenvalues, stretch, a, a_inv })
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn phi1(&self, z: &[C64]) -> Point {
        let d: Vec<C64> = z.iter().zip(&self.zeta).map(|(a, b)| a - b).collect();
        apply(&self.phi1, &d)
    }

    pub fn phi1_jacobian(&self) -> &CMat {
        &self.phi1
    }

    pub fn phi2(&self, x: &[C64]) -> Point {
        let mut w = x.to_vec();
        let n = w.len();
        w[n - 1] += tangential_quadratic(&self.quad, x);
        w
    }

    pub fn phi2_jacobian(&self, x: &[C64]) -> CMat {
        quadratic_shear_jacobian(&self.quad, x, 1.0)
    }

    pub fn phi3(&self, y: &[C64]) -> Point {
        let n = y.len();
        let mut w = apply(&self.a_inv, &y[..n - 1]);
        w.push(y[n - 1]);
        w
    }

    pub fn phi3_jacobian(&self) -> CMat {
        let n = self.dim();
        let mut m = CMat::identity(n, n);
        m.view_mut((0, 0), (n - 1, n - 1)).copy_from(&self.a_inv);
        m
    }

    /// `h^ζ = φ₃ ∘ φ₂ ∘ φ₁`.
    pub fn h(&self, z: &[C64]) -> Point {
        self.phi3(&self.phi2(&self.phi1(z)))
    }

    pub fn h_jacobian(&self, z: &[C64]) -> CMat {
        self.phi3_jacobian() * self.phi2_jacobian(&self.phi1(z)) * &self.phi1
    }

    /// `max |H(A'z, 0) - |'z|²|` over the given tangential vectors.
    pub fn levi_residual(&self, samples: &[Vec<C64>]) -> f64 {
        let m = self.a.transpose() * &self.levi * conj_mat(&self.a);
        samples
            .iter()
            .map(|v| (quadratic(&m, v).re - v.iter().map(|x| x.norm_sqr()).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

/// `Λ_η(z) = ('z/√η, z_n/η)`.
pub fn dilate(eta: f64, z: &[C64]) -> Point {
    let n = z.len();
    z.iter().enumerate().map(|(i, x)| if i + 1 == n { x / eta } else { x / eta.sqrt() }).collect()
}

pub fn dilate_jacobian(eta: f64, n: usize) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(
        n,
        (0..n).map(|i| c(if i + 1 == n { 1.0 / eta } else { 1.0 / eta.sqrt() })),
    ))
}

/// `Φ(z) = (√2 'z/(z_n - 1), (z_n + 1)/(z_n - 1))`, from the Siegel domain
/// `2 Re z_n + |'z|² < 0` onto the unit ball.
#[derive(Debug, Clone, Copy)]
pub struct Cayley {
    pub n: usize,
}

impl Cayley {
    fn denominator(z: &[C64]) -> Result<C64> {
        let d = z[z.len() - 1] - 1.0;
        if d.norm() < 1e-14 {
            Err(Error::Pole)
        } else {
            Ok(d)
        }
    }
}

impl Biholomorphism for Cayley {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, z: &[C64]) -> Result<Point> {
        let d = Self::denominator(z)?;
        let n = z.len();
        let r2 = std::f64::consts::SQRT_2;
        Ok((0..n).map(|i| if i + 1 == n { (z[i] + 1.0) / d } else { z[i] * r2 / d }).collect())
    }

    fn jacobian(&self, z: &[C64]) -> Result<CMat> {
        let d = Self::denominator(z)?;
        let n = z.len();
        let r2 = std::f64::consts::SQRT_2;
        let mut j = CMat::zeros(n, n);
        for i in 0..n - 1 {
            j[(i, i)] = c(r2) / d;
            j[(i, n - 1)] = -z[i] * r2 / (d * d);
        }
        j[(n - 1, n - 1)] = c(-2.0) / (d * d);
        Ok(j)
    }
}

/// Ball metric pulled back to the Siegel domain through [`Cayley`].
pub fn siegel_oracle_metric(z: &[C64], flavor: Flavor) -> Result<CMat> {
    let n = z.len();
    let rho = 2.0 * z[n - 1].re + z[..n - 1].iter().map(|x| x.norm_sqr()).sum::<f64>();
    if rho >= 0.0 {
        return Err(Error::PointOutsideDomain);
    }
    let phi = Cayley { n };
    let w = phi.apply(z)?;
    let g = oracle_metric(&DomainSpec::ball(n)?, flavor, &w)?;
    Ok(pullback(&phi.jacobian(z)?, &g.g))
}

/// How the points `p^j` approach `p⁰` in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Approach {
    /// `p^j = ('0, -δ_j)`, so `ζ^j = p⁰` for every `j`.
    Normal,
    /// `ζ^j` is the boundary point nearest to `κ√δ_j` times a tangential
    /// unit vector, and `p^j = ζ^j - δ_j ν(ζ^j)`.
    Tangential { kappa: f64 },
}

impl Default for Approach {
    fn default() -> Self {
        Approach::Tangential { kappa: 0.25 }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingStep {
    pub delta: f64,
    pub zeta: Point,
    /// `p^j` in chart coordinates.
    pub p: Point,
    /// `p^j` in the original coordinates.
    pub point: Point,
    pub eta: f64,
    pub frame: PinchukFrame,
    /// `S_j'(p^j)`.
    pub s_jacobian: CMat,
    /// `|S_j(p^j) - b*|`.
    pub residual: f64,
    /// `max |h_j'(p^j) - I|`.
    pub h_prime_deviation: f64,
}

impl ScalingStep {
    pub fn s_map(&self, w: &[C64]) -> Point {
        dilate(self.eta, &self.frame.h(w))
    }
}

#[derive(Debug, Clone)]
pub struct ScalingSequence {
    pub chart: NormalizingChart,
    pub approach: Approach,
    pub steps: Vec<ScalingStep>,
}

impl ScalingSequence {
    pub fn base_point(&self) -> Point {
        base_point(self.chart.dim())
    }
}

/// Builds `p^j, ζ^j, η_j` and `S_j = Λ_j ∘ h_j` for each `δ_j`.
pub fn build_scaling_sequence(chart: &NormalizingChart, deltas: &[f64], approach: Approach) -> Result<ScalingSequence> {
    let n = chart.dim();
    let rho = chart.chart_rho();
    let b = base_point(n);
    let mut steps = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(delta > 0.0) {
            return Err(Error::InvalidDomain(format!("distance {delta} must be positive")));
        }
        let zeta = match approach {
            Approach::Normal => vec![czero(); n],
            Approach::Tangential { kappa } => {
                let mut t = vec![czero(); n];
                t[0] = if n == 1 { C64::new(0.0, kappa * delta.sqrt()) } else { c(kappa * delta.sqrt()) };
                project_to_boundary(&rho, &t)?
            }
        };
        let frame = PinchukFrame::at(&rho, &zeta)?;
        let grad = norm(&frame.gradient);
        let p: Point = zeta.iter().zip(&frame.gradient).map(|(z, g)| z - g * (delta / grad)).collect();
        let eta = delta * grad;
        let image = dilate(eta, &frame.h(&p));
        let residual = norm(&image.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>());
        if residual > BASE_POINT_TOL {
            return Err(Error::ScalingMismatch(residual));
        }
        let hj = frame.h_jacobian(&p);
        let h_prime_deviation = max_abs(&(&hj - CMat::identity(n, n)));
        let s_jacobian = dilate_jacobian(eta, n) * hj;
        let point = chart.from_chart(&p);
        steps.push(ScalingStep { delta, zeta, p, point, eta, frame, s_jacobian, residual, h_prime_deviation });
    }
    Ok(ScalingSequence { chart: chart.clone(), approach, steps })
}

/// `δ_j = start·2^{-j}` for `δ_j ≥ stop`.
pub fn geometric_schedule(start: f64, stop: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = start;
    while d >= stop && out.len() < 64 {
        out.push(d);
        d *= 0.5;
    }
    out
}

/// The prefix of `deltas` whose sequence points stay outside the basis
/// truncation layer.
pub fn schedule_within_truncation(
    chart: &NormalizingChart,
    ob: &OrthonormalBasis,
    deltas: &[f64],
    approach: Approach,
) -> Result<Vec<f64>> {
    let seq = build_scaling_sequence(chart, deltas, approach)?;
    Ok(seq.steps.iter().take_while(|s| ob.within_truncation(&s.point)).map(|s| s.delta).collect())
}

/// Where the Kobayashi-Fuks metric comes from in the experiment.
#[derive(Debug, Clone, Copy)]
pub enum MetricSource<'a> {
    Basis(&'a OrthonormalBasis),
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsRecord {
    pub j: usize,
    pub delta: f64,
    pub eta: f64,
    /// `δτ_KF(u)`, `√δ τ_KF(u_H)`, `δ^{n+1} det G_KF`, `R_KF`.
    pub observables: [Option<f64>; 4],
    pub targets: [Option<f64>; 4],
    /// Relative error, or absolute error where the target vanishes.
    pub rel_err: [Option<f64>; 4],
    pub inside_truncation_layer: bool,
    pub scaling_residual: f64,
    pub h_prime_deviation: f64,
}

/// Limits of the four observables at `p⁰` for the chart vector `u`.
pub fn asymptotic_targets(chart: &NormalizingChart, u: &[C64]) -> [Option<f64>; 4] {
    let n = chart.dim();
    let nf = n as f64;
    let k = (nf + 1.0) * (nf + 2.0);
    let t1 = 0.5 * k.sqrt() * u[n - 1].norm();
    let t2 = (n > 1).then(|| {
        let mut uh = u.to_vec();
        uh[n - 1] = czero();
        let levi = chart.chart_rho().hess_zzbar(&vec![czero(); n]);
        (0.5 * k * hermitian_form(&levi, &uh)).sqrt()
    });
    let t3 = k.powi(n as i32) / 2f64.powi(n as i32 + 1);
    let t4 = (n == 1).then_some(-1.0 / 3.0);
    [Some(t1), t2, Some(t3), t4]
}

/// Evaluates the four boundary observables along the scaling sequence.
/// `u` is given in chart coordinates.
pub fn asymptotics_experiment(
    d: &DomainSpec,
    p0: &[C64],
    u: &[C64],
    deltas: &[f64],
    source: MetricSource<'_>,
    approach: Approach,
    force: bool,
) -> Result<Vec<AsymptoticsRecord>> {
    let chart = NormalizingChart::for_domain(d, p0)?;
    let n = chart.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let seq = build_scaling_sequence(&chart, deltas, approach)?;
    let targets = asymptotic_targets(&chart, u);
    let mut out = Vec::with_capacity(seq.steps.len());
    for (j, step) in seq.steps.iter().enumerate() {
        let z = &step.point;
        let (g, curvature, inside) = match source {
            MetricSource::Basis(ob) => {
                let jet = kernel_jet_with(ob, z, 3, force)?;
                let g = MetricPipeline::new(&jet)?.kf()?.g;
                let r = if n == 1 { Some(gaussian_curvature_kf(&jet)?) } else { None };
                (g, r, jet.inside_truncation_layer)
            }
            MetricSource::Oracle => {
                let g = oracle_metric(d, Flavor::KobayashiFuks, z)?.g;
                let r = if n == 1 {
                    RadialKernel::for_domain(d).ok().map(|rk| rk.profiles(z[0].norm_sqr()).gaussian_kf)
                } else {
                    None
                };
                (g, r, false)
            }
        };
        let gc = pullback(&chart.jacobian_from_chart(&step.p), &g);
        let delta = step.delta;
        let nu: Vec<C64> = step.frame.gradient.iter().map(|x| x / norm(&step.frame.gradient)).collect();
        let proj: C64 = u.iter().zip(&nu).map(|(a, b)| a * b.conj()).sum();
        let uh: Vec<C64> = u.iter().zip(&nu).map(|(a, b)| a - b * proj).collect();
        let o1 = delta * hermitian_form(&gc, u).sqrt();
        let o2 = (n > 1).then(|| delta.sqrt() * hermitian_form(&gc, &uh).sqrt());
        let o3 = delta.powi(n as i32 + 1) * gc.determinant().re;
        let observables = [Some(o1), o2, Some(o3), curvature];
        let mut rel_err = [None; 4];
        for i in 0..4 {
            if let (Some(o), Some(t)) = (observables[i], targets[i]) {
                rel_err[i] = Some(if t.abs() < 1e-14 { o.abs() } else { (o - t).abs() / t.abs() });
            }
        }
        out.push(AsymptoticsRecord {
            j,
            delta,
            eta: step.eta,
            observables,
            targets,
            rel_err,
            inside_truncation_layer: inside,
            scaling_residual: step.residual,
            h_prime_deviation: step.h_prime_deviation,
        });
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

pub fn write_asymptotics_csv<W: Write>(records: &[AsymptoticsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "j,delta,observable_1,observable_2,observable_3,observable_4,target_1,target_2,target_3,target_4,rel_err_1,rel_err_2,rel_err_3,rel_err_4,truncated"
    )?;
    for r in records {
        let mut cols = vec![r.j.to_string(), fmt17(r.delta)];
        cols.extend(r.observables.iter().map(|x| opt(*x)));
        cols.extend(r.targets.iter().map(|x| opt(*x)));
        cols.extend(r.rel_err.iter().map(|x| opt(*x)));
        cols.push(r.inside_truncation_layer.to_string());
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SiegelRho;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn fd_jacobian(f: impl Fn(&[C64]) -> Point, z: &[C64]) -> CMat {
        let n = z.len();
        let h = 1e-6;
        let mut j = CMat::zeros(n, n);
        for k in 0..n {
            let mut a = z.to_vec();
            let mut b = z.to_vec();
            a[k] += h;
            b[k] -= h;
            let (fa, fb) = (f(&a), f(&b));
            for i in 0..n {
                j[(i, k)] = (fa[i] - fb[i]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn siegel_chart_is_identity() {
        let chart = NormalizingChart::new(Arc::new(SiegelRho { n: 2 }), &[czero(), czero()]).unwrap();
        assert!(max_abs(&(chart.affine() - CMat::identity(2, 2))) < 1e-14);
        assert!(max_abs(chart.shear()) < 1e-14);
    }

    #[test]
    fn ball_chart_has_unit_levi_form() {
        let d = DomainSpec::ball(2).unwrap();
        let chart = NormalizingChart::for_domain(&d, &[czero(), c(-1.0)]).unwrap();
        let rho = chart.chart_rho();
        let o = [czero(), czero()];
        assert!(rho.value(&o).abs() < 1e-15);
        let g = rho.grad_zbar(&o);
        assert!(g[0].norm() < 1e-14 && (g[1] - 1.0).norm() < 1e-14);
        assert!(max_abs(&(rho.hess_zzbar(&o) - CMat::identity(2, 2))) < 1e-14);
        assert!(rho.hess_zz(&o)[(0, 0)].norm() < 1e-14);
        let w = [C64::new(0.1, 0.2), C64::new(-0.05, 0.1)];
        let back = chart.to_chart(&chart.from_chart(&w));
        assert!(norm(&[back[0] - w[0], back[1] - w[1]]) < 1e-14);
    }

    #[test]
    fn disc_chart_matches_expansion() {
        let chart = NormalizingChart::for_domain(&DomainSpec::disc(), &[c(1.0)]).unwrap();
        let rho = chart.chart_rho();
        let w = [C64::new(-0.3, 0.2)];
        assert!(close(rho.value(&w), 2.0 * w[0].re + w[0].norm_sqr(), 1e-15));
    }

    #[test]
    fn ellipsoid_chart_derivatives_match_differences() {
        let d = DomainSpec::ellipsoid(vec![1.0, 1.0], vec![1, 2]).unwrap();
        let p0 = [c(0.6), c(0.8f64.sqrt())];
        let chart = NormalizingChart::for_domain(&d, &p0).unwrap();
        let rho = chart.chart_rho();
        let o = [czero(), czero()];
        assert!((rho.hess_zzbar(&o)[(0, 0)] - 1.0).norm() < 1e-12);
        assert!(rho.hess_zz(&o)[(0, 0)].norm() < 1e-12);
        let w = [C64::new(0.03, -0.02), C64::new(-0.04, 0.01)];
        let h = 1e-5;
        let g = rho.grad_z(&w);
        for k in 0..2 {
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[k] += h;
            b[k] -= h;
            let dx = (rho.value(&a) - rho.value(&b)) / (2.0 * h);
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[k] += C64::new(0.0, h);
            b[k] -= C64::new(0.0, h);
            let dy = (rho.value(&a) - rho.value(&b)) / (2.0 * h);
            assert!((g[k] - C64::new(dx, -dy) * 0.5).norm() < 1e-8);
            let ga = CMat::from_row_slice(
                1,
                2,
                &rho.grad_z(&{
                    let mut a = w.to_vec();
                    a[k] += h;
                    a
                }),
            );
            let gb = CMat::from_row_slice(
                1,
                2,
                &rho.grad_z(&{
                    let mut b = w.to_vec();
                    b[k] -= h;
                    b
                }),
            );
            let ga2 = CMat::from_row_slice(
                1,
                2,
                &rho.grad_z(&{
                    let mut a = w.to_vec();
                    a[k] += C64::new(0.0, h);
                    a
                }),
            );
            let gb2 = CMat::from_row_slice(
                1,
                2,
                &rho.grad_z(&{
                    let mut b = w.to_vec();
                    b[k] -= C64::new(0.0, h);
                    b
                }),
            );
            // ∂/∂z_k of ∂ρ/∂z_l and ∂/∂z̄_k of ∂ρ/∂z_l.
            let dzk = ((&ga - &gb) - (&ga2 - &gb2) * C64::new(0.0, 1.0)) / c(4.0 * h);
            let dzbk = ((&ga - &gb) + (&ga2 - &gb2) * C64::new(0.0, 1.0)) / c(4.0 * h);
            let hzz = rho.hess_zz(&w);
            let hzzb = rho.hess_zzbar(&w);
            for l in 0..2 {
                assert!((dzk[(0, l)] - hzz[(k, l)]).norm() < 1e-7);
                assert!((dzbk[(0, l)] - hzzb[(l, k)]).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn not_strongly_pseudoconvex_is_rejected() {
        // The bidisc's face |z1| = 1 is Levi-flat in the z2 direction.
        let d = DomainSpec::polydisc(2).unwrap();
        let err = NormalizingChart::for_domain(&d, &[c(1.0), c(0.3)]).unwrap_err();
        assert!(matches!(err, Error::NotStronglyPseudoconvex(_)), "{err:?}");
    }

    #[test]
    fn phi1_properties() {
        let rho = SiegelRho { n: 2 };
        let zeta = [C64::new(0.3, 0.1), c(-0.05)];
        let zeta = [zeta[0], c(-zeta[0].norm_sqr() / 2.0)];
        let f = PinchukFrame::at(&rho, &zeta).unwrap();
        assert!(norm(&f.h(&zeta)) < 1e-15);
        let g = &f.gradient;
        let gn = norm(g);
        let delta = 0.01;
        let p: Vec<C64> = zeta.iter().zip(g).map(|(z, g)| z - g * (delta / gn)).collect();
        let w = f.phi1(&p);
        assert!(w[0].norm() < 1e-15 && (w[1] + delta * gn).norm() < 1e-14);
        let det = f.phi1_jacobian().determinant();
        assert!((det - gn * gn).norm() < 1e-13);
        let aligned = PinchukFrame::at(&rho, &[czero(), czero()]).unwrap();
        assert!(max_abs(&(aligned.phi1_jacobian() - CMat::identity(2, 2))) < 1e-15);
        assert!(max_abs(&(aligned.h_jacobian(&[czero(), czero()]) - CMat::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn phi2_fixes_normal_axis_and_vanishes_on_ball() {
        let ball = DomainSpec::ball(2).unwrap().defining_function();
        let zeta = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let f = PinchukFrame::at(ball.as_ref(), &zeta).unwrap();
        assert!(max_abs(&f.quad) < 1e-14);
        let rho = SiegelRho { n: 2 };
        let zeta = [C64::new(0.4, 0.2), c(-0.1)];
        let f = PinchukFrame::at(&rho, &zeta).unwrap();
        let x = [czero(), C64::new(0.2, -0.1)];
        assert_eq!(f.phi2(&x), x.to_vec());
        assert!(max_abs(&(f.phi2_jacobian(&x) - CMat::identity(2, 2))) < 1e-15);
        let disc = PinchukFrame::at(DomainSpec::disc().defining_function().as_ref(), &[C64::new(0.0, 1.0)]).unwrap();
        assert_eq!(disc.phi2(&[c(0.3)]), vec![c(0.3)]);
    }

    #[test]
    fn phi3_normalizes_levi_form() {
        // A frame with H('z, 0) = 2|z1|².
        let rho = crate::domain::PowerSumRho { coefficients: vec![2.0, 1.0], exponents: vec![1, 1] };
        let f = PinchukFrame::at(&rho, &[czero(), c(-1.0)]).unwrap();
        assert!((f.a[(0, 0)] - c(0.5f64.sqrt())).norm() < 1e-14);
        // Eigenvalues (1, 4) on the tangential block.
        let rho = crate::domain::PowerSumRho { coefficients: vec![1.0, 4.0, 1.0], exponents: vec![1, 1, 1] };
        let f = PinchukFrame::at(&rho, &[czero(), czero(), c(-1.0)]).unwrap();
        assert!(close(f.eigenvalues[0], 1.0, 1e-13) && close(f.eigenvalues[1], 4.0, 1e-13));
        assert!(close(f.stretch[(1, 1)].re, 0.5, 1e-13));
        let samples: Vec<Vec<C64>> = vec![
            vec![c(1.0), czero()],
            vec![C64::new(0.3, -0.7), C64::new(1.1, 0.2)],
            vec![czero(), C64::new(0.0, 2.0)],
        ];
        assert!(f.levi_residual(&samples) < 1e-10);
    }

    #[test]
    fn dilation_and_cayley() {
        let z = [c(1.0), c(1.0)];
        assert_eq!(dilate(0.25, &z), vec![c(2.0), c(4.0)]);
        assert!(close(dilate_jacobian(0.25, 2).determinant().re, 8.0, 1e-14));
        assert_eq!(dilate(1.0, &z), z.to_vec());
        let phi = Cayley { n: 2 };
        let b = base_point(2);
        assert!(norm(&phi.apply(&b).unwrap()) < 1e-15);
        let j = phi.jacobian(&b).unwrap();
        assert!((j[(0, 0)] + 0.5f64.sqrt()).norm() < 1e-15 && (j[(1, 1)] + 0.5).norm() < 1e-15);
        assert!(j[(0, 1)].norm() < 1e-15);
        let w = phi.apply(&[czero(), C64::new(0.0, 3.7)]).unwrap();
        assert!(close(norm(&w), 1.0, 1e-14));
        assert_eq!(phi.apply(&[czero(), c(1.0)]).unwrap_err(), Error::Pole);
        let z = [C64::new(0.2, 0.1), C64::new(-0.4, 0.3)];
        let fd = fd_jacobian(|x| phi.apply(x).unwrap(), &z);
        assert!(max_abs(&(fd - phi.jacobian(&z).unwrap())) < 1e-8);
    }

    #[test]
    fn siegel_oracle_at_base_point() {
        let g = siegel_oracle_metric(&base_point(2), Flavor::KobayashiFuks).unwrap();
        assert!(max_abs(&(g.clone() - CMat::from_diagonal(&CVec::from_vec(vec![c(6.0), c(3.0)])))) < 1e-13);
        assert!(close(hermitian_form(&g, &[czero(), c(0.7)]).sqrt(), 3f64.sqrt() * 0.7, 1e-13));
        let g1 = siegel_oracle_metric(&base_point(1), Flavor::KobayashiFuks).unwrap();
        assert!(close(g1[(0, 0)].re, 1.5, 1e-13));
    }

    #[test]
    fn siegel_sequence_hits_base_point() {
        let chart = NormalizingChart::new(Arc::new(SiegelRho { n: 2 }), &[czero(), czero()]).unwrap();
        let seq = build_scaling_sequence(&chart, &[0.1], Approach::Normal).unwrap();
        let s = &seq.steps[0];
        assert!(norm(&[s.p[0], s.p[1] + 0.1]) < 1e-15);
        assert!(close(s.eta, 0.1, 1e-15));
        assert!(s.residual < 1e-15);
    }

    #[test]
    fn ball_sequence_properties() {
        let d = DomainSpec::ball(2).unwrap();
        let chart = NormalizingChart::for_domain(&d, &[czero(), c(-1.0)]).unwrap();
        let deltas: Vec<f64> = (1..=10).map(|j| 2f64.powi(-j)).collect();
        let seq = build_scaling_sequence(&chart, &deltas, Approach::default()).unwrap();
        let mut last = f64::INFINITY;
        for s in &seq.steps {
            assert!(s.residual < BASE_POINT_TOL);
            assert!(close(s.eta / s.delta, 1.0, 1e-12), "{:?} {} {}", s.zeta, s.eta, s.delta);
            assert!(s.h_prime_deviation < last);
            last = s.h_prime_deviation;
            let zs = s.point.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            assert!(close(1.0 - zs, s.delta, 1e-12));
            let fd = fd_jacobian(|w| s.s_map(w), &s.p);
            assert!(max_abs(&(fd - &s.s_jacobian)) < 1e-6 * max_abs(&s.s_jacobian));
        }
    }

    #[test]
    fn ellipsoid_eta_ratio_converges() {
        let d = DomainSpec::ellipsoid(vec![1.0, 1.0], vec![1, 2]).unwrap();
        let chart = NormalizingChart::for_domain(&d, &[czero(), c(1.0)]).unwrap();
        let deltas = geometric_schedule(0.1, 1e-3);
        let seq = build_scaling_sequence(&chart, &deltas, Approach::default()).unwrap();
        let errs: Vec<f64> = seq.steps.iter().map(|s| (s.eta / s.delta - 1.0).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(*errs.last().unwrap() < 1e-2);
        let devs: Vec<f64> = seq.steps.iter().map(|s| s.h_prime_deviation).collect();
        assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    }

    #[test]
    fn disc_oracle_asymptotics() {
        let d = DomainSpec::disc();
        let recs =
            asymptotics_experiment(&d, &[c(1.0)], &[c(1.0)], &[0.01], MetricSource::Oracle, Approach::default(), false)
                .unwrap();
        let r = &recs[0];
        let o1 = r.observables[0].unwrap();
        assert!(close(o1, 6f64.sqrt() / (2.0 - 0.01), 1e-10), "{:?}", r);
        assert!(close(r.observables[2].unwrap(), 6.0 / (2.0 - 0.01f64).powi(2), 1e-10));
        assert!(close(r.observables[3].unwrap(), -1.0 / 3.0, 1e-10));
        assert!(r.observables[1].is_none());
        let mut buf = Vec::new();
        write_asymptotics_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn ball_oracle_tangential_limit() {
        let d = DomainSpec::ball(2).unwrap();
        let u = [c(1.0), czero()];
        let recs = asymptotics_experiment(
            &d,
            &[czero(), c(-1.0)],
            &u,
            &geometric_schedule(0.1, 1e-4),
            MetricSource::Oracle,
            Approach::default(),
            false,
        )
        .unwrap();
        let t = recs[0].targets;
        assert!(close(t[1].unwrap(), 6f64.sqrt(), 1e-12) && close(t[2].unwrap(), 18.0, 1e-12));
        let e: Vec<f64> = recs.iter().map(|r| r.rel_err[1].unwrap()).collect();
        assert!(*e.last().unwrap() < 1e-2, "{e:?}");
        let e3: Vec<f64> = recs.iter().map(|r| r.rel_err[2].unwrap()).collect();
        assert!(e3.windows(2).all(|w| w[1] < w[0]) && *e3.last().unwrap() < 1e-3);
    }
}
